//! Ray tracing through isotropic and anisotropic refractive media.

use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::dynamics::{
    check_span, jm_transform, solve_ode, Driver, IntegratorConfig, NaturalForm, NaturalHamiltonian,
    Param, RayState, RayTrajectory, Sample, Trajectory,
};
use crate::error::{Error, Result};
use crate::manifold::{central_matrix_grad, mat_vec, quad, FD_REL_STEP};

/// A medium: refractive index `n(q) > 0` and spatial metric `g_ij(q)`.
pub trait RefractiveField: Send + Sync {
    fn dim(&self) -> usize;

    fn index(&self, q: &[f64]) -> f64;

    /// Whether `index_grad` is analytic or a central finite difference.
    fn analytic_gradient(&self) -> bool {
        false
    }

    fn index_grad(&self, q: &[f64]) -> Vec<f64> {
        let mut probe = q.to_vec();
        (0..q.len())
            .map(|i| {
                let h = FD_REL_STEP * q[i].abs().max(1.0);
                probe[i] = q[i] + h;
                let up = self.index(&probe);
                probe[i] = q[i] - h;
                let down = self.index(&probe);
                probe[i] = q[i];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    /// `g_ij(q)`; Euclidean unless overridden.
    fn metric(&self, _q: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.dim(), self.dim())
    }

    /// `g^ij(q)`.
    fn metric_upper(&self, q: &[f64]) -> DMatrix<f64> {
        let g = self.metric(q);
        let m = g.nrows();
        g.try_inverse().unwrap_or_else(|| DMatrix::from_element(m, m, f64::NAN))
    }

    /// `d g_jk / d q^i`, one matrix per `i`.
    fn metric_grad(&self, q: &[f64]) -> Vec<DMatrix<f64>> {
        central_matrix_grad(q, |x| self.metric(x))
    }

    /// `d g^jk / d q^i`, one matrix per `i`.
    fn metric_upper_grad(&self, q: &[f64]) -> Vec<DMatrix<f64>> {
        central_matrix_grad(q, |x| self.metric_upper(x))
    }

    fn in_domain(&self, q: &[f64]) -> bool {
        let n = self.index(q);
        q.len() == self.dim() && n.is_finite() && n > 0.0
    }
}

/// Index profile of a built-in medium.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// `n = n0`.
    Homogeneous { n0: f64 },
    /// `n = n0 + a . q`.
    Linear { n0: f64, a: Vec<f64> },
    /// `n = n0 + alpha |q|^2`.
    Radial { n0: f64, alpha: f64 },
}

/// Built-in medium: an index profile with a constant metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Medium {
    dim: usize,
    profile: Profile,
    metric: DMatrix<f64>,
    metric_upper: DMatrix<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MediumFile {
    kind: String,
    #[serde(default)]
    dim: Option<usize>,
    #[serde(default)]
    n0: Option<f64>,
    #[serde(default)]
    a: Option<Vec<f64>>,
    #[serde(default)]
    alpha: Option<f64>,
    #[serde(default)]
    metric: Option<Vec<Vec<f64>>>,
}

impl Medium {
    pub fn new(dim: usize, profile: Profile) -> Result<Self> {
        Self::with_metric(dim, profile, DMatrix::identity(dim, dim))
    }

    /// Medium with the constant anisotropic metric `g`.
    pub fn with_metric(dim: usize, profile: Profile, g: DMatrix<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("medium dimension must be >= 1".into()));
        }
        let (n0, extra) = match &profile {
            Profile::Homogeneous { n0 } => (*n0, vec![]),
            Profile::Linear { n0, a } => {
                if a.len() != dim {
                    return Err(Error::Dimension {
                        expected: dim,
                        got: a.len(),
                    });
                }
                (*n0, a.clone())
            }
            Profile::Radial { n0, alpha } => (*n0, vec![*alpha]),
        };
        if !(n0.is_finite() && n0 > 0.0) || extra.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("index parameters must be finite with n0 > 0 (n0 = {n0})")));
        }
        if g.nrows() != dim || g.ncols() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: g.nrows(),
            });
        }
        let g = crate::manifold::MetricMatrix::new(g)?.into_inner();
        let metric_upper = g
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularMetric("medium metric".into()))?;
        Ok(Medium {
            dim,
            profile,
            metric: g,
            metric_upper,
        })
    }

    pub fn homogeneous(dim: usize, n0: f64) -> Result<Self> {
        Self::new(dim, Profile::Homogeneous { n0 })
    }

    pub fn linear(n0: f64, a: Vec<f64>) -> Result<Self> {
        Self::new(a.len(), Profile::Linear { n0, a })
    }

    pub fn radial(dim: usize, n0: f64, alpha: f64) -> Result<Self> {
        Self::new(dim, Profile::Radial { n0, alpha })
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Parses `{"kind": "homogeneous"|"linear"|"radial", ...}`. Homogeneous
    /// and radial media need `dim`; linear takes its dimension from `a`.
    /// An optional `metric` gives a constant anisotropic metric.
    pub fn from_json(text: &str) -> Result<Self> {
        let f: MediumFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Parse(format!("{} medium needs `{name}`", f.kind)))
        };
        let n0 = need(f.n0, "n0")?;
        let (dim, profile) = match f.kind.as_str() {
            "homogeneous" => (f.dim, Profile::Homogeneous { n0 }),
            "linear" => {
                let a = f
                    .a
                    .clone()
                    .ok_or_else(|| Error::Parse("linear medium needs `a`".into()))?;
                (Some(f.dim.unwrap_or(a.len())), Profile::Linear { n0, a })
            }
            "radial" => (
                f.dim,
                Profile::Radial {
                    n0,
                    alpha: need(f.alpha, "alpha")?,
                },
            ),
            other => return Err(Error::Parse(format!("unknown medium kind `{other}`"))),
        };
        let dim = dim
            .or_else(|| f.metric.as_ref().map(|m| m.len()))
            .ok_or_else(|| Error::Parse(format!("{} medium needs `dim`", f.kind)))?;
        match f.metric {
            None => Self::new(dim, profile),
            Some(rows) => {
                if rows.iter().any(|r| r.len() != rows.len()) {
                    return Err(Error::Parse("metric must be a square matrix".into()));
                }
                let k = rows.len();
                let g = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
                Self::with_metric(dim, profile, g)
            }
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl RefractiveField for Medium {
    fn dim(&self) -> usize {
        self.dim
    }

    fn index(&self, q: &[f64]) -> f64 {
        match &self.profile {
            Profile::Homogeneous { n0 } => *n0,
            Profile::Linear { n0, a } => n0 + a.iter().zip(q).map(|(x, y)| x * y).sum::<f64>(),
            Profile::Radial { n0, alpha } => n0 + alpha * q.iter().map(|v| v * v).sum::<f64>(),
        }
    }

    fn analytic_gradient(&self) -> bool {
        true
    }

    fn index_grad(&self, q: &[f64]) -> Vec<f64> {
        match &self.profile {
            Profile::Homogeneous { .. } => vec![0.0; self.dim],
            Profile::Linear { a, .. } => a.clone(),
            Profile::Radial { alpha, .. } => q.iter().map(|v| 2.0 * alpha * v).collect(),
        }
    }

    fn metric(&self, _q: &[f64]) -> DMatrix<f64> {
        self.metric.clone()
    }

    fn metric_upper(&self, _q: &[f64]) -> DMatrix<f64> {
        self.metric_upper.clone()
    }

    fn metric_grad(&self, _q: &[f64]) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(self.dim, self.dim); self.dim]
    }

    fn metric_upper_grad(&self, _q: &[f64]) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(self.dim, self.dim); self.dim]
    }
}

/// Isotropic Euclidean medium given by an index closure; the gradient is
/// taken by central differences.
pub struct IndexFn<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> IndexFn<F> {
    pub fn new(dim: usize, f: F) -> Self {
        IndexFn { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> RefractiveField for IndexFn<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn index(&self, q: &[f64]) -> f64 {
        (self.f)(q)
    }
}

/// The optics Hamiltonian `sqrt(g^ij p_i p_j) - n(q)` as a natural
/// Hamiltonian, for use with [`jm_transform`].
pub struct OpticsNatural<'f> {
    pub field: &'f dyn RefractiveField,
}

impl NaturalHamiltonian for OpticsNatural<'_> {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn form(&self) -> NaturalForm {
        NaturalForm::FirstOrder
    }

    fn kinetic_metric(&self, q: &[f64]) -> DMatrix<f64> {
        self.field.metric_upper(q)
    }

    fn potential(&self, q: &[f64]) -> f64 {
        -self.field.index(q)
    }
}

impl RayState {
    /// Ray at `q` heading along `direction`, with momentum scaled so that
    /// `sqrt(g^ij p_i p_j) = n(q)`.
    pub fn launch(field: &dyn RefractiveField, q: Vec<f64>, direction: &[f64]) -> Result<Self> {
        if q.len() != field.dim() || direction.len() != field.dim() {
            return Err(Error::Dimension {
                expected: field.dim(),
                got: q.len().min(direction.len()),
            });
        }
        if !field.in_domain(&q) {
            return Err(Error::Domain(format!("n(q) > 0 violated at q = {q:?}")));
        }
        // p = n g v / |v|_g
        let g = field.metric(&q);
        let norm = quad(&g, direction, direction).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidConfig("launch direction must be non-zero".into()));
        }
        let n = field.index(&q);
        let p = mat_vec(&g, direction).iter().map(|v| n * v / norm).collect();
        RayState::new(q, p)
    }
}

/// Traces a ray parametrized by arc length `s`, JM parameter `tau` or time `t`.
///
/// * `s`: `H = sqrt(g^ij p_i p_j) - n`.
/// * `tau`: `H = 1/2 g~^ij p_i p_j` with `g~^ij = g^ij / n^2`.
/// * `t`: `H = 1/2 g^ij p_i p_j - 1/2 n^2`.
///
/// The other two parameters are integrated alongside from
/// `d tau = n ds = n^2 dt`, starting at zero.
pub fn ray_trace(
    field: &dyn RefractiveField,
    state0: &RayState,
    param: Param,
    span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<RayTrajectory> {
    check_span(span)?;
    let m = field.dim();
    if state0.q.len() != m || state0.p.len() != m {
        return Err(Error::Dimension {
            expected: m,
            got: state0.q.len(),
        });
    }
    if !field.in_domain(&state0.q) {
        return Err(Error::Domain(format!("n(q) > 0 violated at q = {:?}", state0.q)));
    }
    let rhs = |_x: f64, y: &[f64], dy: &mut [f64]| {
        let (q, rest) = y.split_at(m);
        let p = &rest[..m];
        let k = field.metric_upper(q);
        let dk = field.metric_upper_grad(q);
        let n = field.index(q);
        let dn = field.index_grad(q);
        let kp = mat_vec(&k, p);
        let kin = quad(&k, p, p);
        match param {
            Param::S => {
                let norm = kin.sqrt();
                for i in 0..m {
                    dy[i] = kp[i] / norm;
                    dy[m + i] = -0.5 * quad(&dk[i], p, p) / norm + dn[i];
                }
                dy[2 * m] = 1.0 / n;
                dy[2 * m + 1] = n;
            }
            Param::Tau => {
                let n2 = n * n;
                for i in 0..m {
                    dy[i] = kp[i] / n2;
                    dy[m + i] = -0.5 * quad(&dk[i], p, p) / n2 + kin * dn[i] / (n2 * n);
                }
                dy[2 * m] = 1.0 / n2;
                dy[2 * m + 1] = 1.0 / n;
            }
            Param::T => {
                for i in 0..m {
                    dy[i] = kp[i];
                    dy[m + i] = -0.5 * quad(&dk[i], p, p) + n * dn[i];
                }
                dy[2 * m] = n;
                dy[2 * m + 1] = n * n;
            }
        }
    };
    let y0 = state0.to_flat_with_clocks();
    let sol = solve_ode(rhs, |y| field.in_domain(&y[..m]), span.0, &y0, span.1, cfg)?;
    let samples = sol
        .xs
        .iter()
        .zip(&sol.ys)
        .map(|(&x, y)| {
            let (a, b) = (y[2 * m], y[2 * m + 1]);
            let (t, s, tau) = match param {
                Param::S => (a, x, b),
                Param::Tau => (a, b, x),
                Param::T => (x, a, b),
            };
            Sample {
                t,
                s,
                tau,
                state: RayState {
                    q: y[..m].to_vec(),
                    p: y[m..2 * m].to_vec(),
                },
            }
        })
        .collect();
    Ok(Trajectory {
        driver: match param {
            Param::S => Driver::RayS,
            Param::Tau => Driver::RayTau,
            Param::T => Driver::RayT,
        },
        model: "optics".into(),
        termination: sol.termination,
        config: *cfg,
        samples,
    })
}

impl RayState {
    fn to_flat_with_clocks(&self) -> Vec<f64> {
        let mut y: Vec<f64> = self.q.iter().chain(&self.p).copied().collect();
        y.extend([0.0, 0.0]);
        y
    }
}

/// `reparametrize` for rays, using `n(q)` of the medium.
pub fn reparametrize_ray(
    traj: &RayTrajectory,
    from: Param,
    to: Param,
    field: &dyn RefractiveField,
) -> Result<RayTrajectory> {
    crate::dynamics::reparametrize(traj, from, to, |s| Ok(field.index(&s.q)))
}

fn arc_knots(traj: &RayTrajectory) -> Result<Vec<f64>> {
    if traj.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: traj.len(),
        });
    }
    if !traj.is_strictly_increasing(Param::S) {
        return Err(Error::NonMonotone("s"));
    }
    Ok(traj.param_values(Param::S))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Max over interior samples of `|d/ds(n g dq/ds) - grad n - 1/2 n dg(dq/ds, dq/ds)|`,
/// by central differences along the `s` column. For a Euclidean metric this
/// is the eikonal equation `d/ds(n dq/ds) = grad n`.
pub fn eikonal_residual(traj: &RayTrajectory, field: &dyn RefractiveField) -> Result<f64> {
    let s = arc_knots(traj)?;
    let q: Vec<&[f64]> = traj.samples.iter().map(|x| x.state.q.as_slice()).collect();
    let m = field.dim();
    let mid_momentum = |k: usize| -> Vec<f64> {
        let h = s[k + 1] - s[k];
        let v: Vec<f64> = (0..m).map(|i| (q[k + 1][i] - q[k][i]) / h).collect();
        let qm: Vec<f64> = (0..m).map(|i| 0.5 * (q[k + 1][i] + q[k][i])).collect();
        let n = field.index(&qm);
        mat_vec(&field.metric(&qm), &v).iter().map(|x| n * x).collect()
    };
    let mut worst: f64 = 0.0;
    let mut prev = mid_momentum(0);
    for k in 1..s.len() - 1 {
        let next = mid_momentum(k);
        let span = 0.5 * (s[k + 1] - s[k - 1]);
        let v: Vec<f64> = (0..m).map(|i| (q[k + 1][i] - q[k - 1][i]) / (s[k + 1] - s[k - 1])).collect();
        let n = field.index(q[k]);
        let dn = field.index_grad(q[k]);
        let dg = field.metric_grad(q[k]);
        let res: Vec<f64> = (0..m)
            .map(|i| (next[i] - prev[i]) / span - dn[i] - 0.5 * n * quad(&dg[i], &v, &v))
            .collect();
        worst = worst.max(norm2(&res));
        prev = next;
    }
    if worst.is_finite() {
        Ok(worst)
    } else {
        Err(Error::NonFinite("eikonal_residual"))
    }
}

/// `(max |sqrt(g^ij p_i p_j) - n(q)|, max |H(q, p)|)` along a ray, where
/// `H` is the Hamiltonian of the trajectory's own parametrization.
pub fn ray_conservation_check(traj: &RayTrajectory, field: &dyn RefractiveField) -> (f64, f64) {
    let mut norm_res: f64 = 0.0;
    let mut energy_res: f64 = 0.0;
    for sample in &traj.samples {
        let (q, p) = (&sample.state.q, &sample.state.p);
        let kin = quad(&field.metric_upper(q), p, p);
        let n = field.index(q);
        norm_res = norm_res.max((kin.sqrt() - n).abs());
        let h = match traj.driver {
            Driver::RayTau => (kin / (n * n)).sqrt() - 1.0,
            Driver::RayT => 0.5 * kin - 0.5 * n * n,
            _ => kin.sqrt() - n,
        };
        energy_res = energy_res.max(h.abs());
    }
    (norm_res, energy_res)
}

/// Max over interior samples of `|p_i - n g_ij dq^j/ds|` with central
/// difference velocities along `s`.
pub fn huygens_residual(traj: &RayTrajectory, field: &dyn RefractiveField) -> Result<f64> {
    let s = arc_knots(traj)?;
    let m = field.dim();
    let mut worst: f64 = 0.0;
    for k in 1..s.len() - 1 {
        let (a, b, c) = (&traj.samples[k - 1], &traj.samples[k], &traj.samples[k + 1]);
        let v: Vec<f64> = (0..m)
            .map(|i| (c.state.q[i] - a.state.q[i]) / (s[k + 1] - s[k - 1]))
            .collect();
        let q = &b.state.q;
        let n = field.index(q);
        let gv = mat_vec(&field.metric(q), &v);
        let res: Vec<f64> = (0..m).map(|i| b.state.p[i] - n * gv[i]).collect();
        worst = worst.max(norm2(&res));
    }
    Ok(worst)
}

/// Max `|sqrt(g~^ij p_i p_j) - 1|` along the ray, with the JM metric
/// `g~^ij = g^ij / n^2` of the optics Hamiltonian at `E = 0`.
pub fn jm_hamiltonian_drift(traj: &RayTrajectory, field: &dyn RefractiveField) -> Result<f64> {
    let natural = OpticsNatural { field };
    let jm = jm_transform(&natural, 0.0);
    let mut worst: f64 = 0.0;
    for s in &traj.samples {
        worst = worst.max((jm.hamiltonian(&s.state.q, &s.state.p)? - 1.0).abs());
    }
    Ok(worst)
}

/// Closed-form ray in `n = n0 + a . q` with Euclidean metric, in `t`.
///
/// With `u = n(q(t))` one has `u'' = |a|^2 u`; the component of `q` normal
/// to `a` moves uniformly. Returns `(q(t), p(t), s(t))`.
pub fn linear_medium_ray(n0: f64, a: &[f64], q0: &[f64], p0: &[f64], t: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let k2: f64 = a.iter().map(|v| v * v).sum();
    let u0 = n0 + a.iter().zip(q0).map(|(x, y)| x * y).sum::<f64>();
    let du0: f64 = a.iter().zip(p0).map(|(x, y)| x * y).sum();
    if k2 == 0.0 {
        let q = q0.iter().zip(p0).map(|(x, v)| x + v * t).collect();
        return (q, p0.to_vec(), n0 * t);
    }
    let k = k2.sqrt();
    let (ch, sh) = ((k * t).cosh(), (k * t).sinh());
    let u = u0 * ch + du0 / k * sh;
    let du = u0 * k * sh + du0 * ch;
    let s = u0 * sh / k + du0 / k2 * (ch - 1.0);
    let dim = q0.len();
    let mut q = vec![0.0; dim];
    let mut p = vec![0.0; dim];
    for i in 0..dim {
        let par = a[i] / k2;
        let q0_perp = q0[i] - par * (u0 - n0);
        let p0_perp = p0[i] - par * du0;
        q[i] = q0_perp + p0_perp * t + par * (u - n0);
        p[i] = p0_perp + par * du;
    }
    (q, p, s)
}
