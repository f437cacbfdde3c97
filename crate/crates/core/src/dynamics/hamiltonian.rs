use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::gradient::check_span;
use super::integrator::{solve_ode, IntegratorConfig};
use super::trajectory::{DualState, Driver, Sample, Trajectory};
use crate::error::{Error, Result};
use crate::manifold::{dual_pair, mat_vec, quad, CoordVector, DuallyFlat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianKind {
    /// `sqrt(g~_ij(eta) theta^i theta^j)` with `g~ = g / n^2`.
    GeodesicEta,
    /// `sqrt(g~^ij(theta) eta_i eta_j)` with `g~ = g / n*^2`.
    GeodesicTheta,
    /// `1/2 g_ij(eta) theta^i theta^j - 1/2 n^2(eta)`.
    NaturalIg,
    /// `sqrt(g^ij(q) p_i p_j) - n(q)`.
    NaturalOptics,
}

/// Which Hamiltonian drives a flow, plus its energy level for the natural
/// kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub kind: HamiltonianKind,
    pub energy: Option<f64>,
}

impl HamiltonianSpec {
    pub fn geodesic_eta() -> Self {
        HamiltonianSpec {
            kind: HamiltonianKind::GeodesicEta,
            energy: None,
        }
    }

    pub fn geodesic_theta() -> Self {
        HamiltonianSpec {
            kind: HamiltonianKind::GeodesicTheta,
            energy: None,
        }
    }

    pub fn natural_ig() -> Self {
        HamiltonianSpec {
            kind: HamiltonianKind::NaturalIg,
            energy: Some(0.0),
        }
    }

    pub fn natural_optics() -> Self {
        HamiltonianSpec {
            kind: HamiltonianKind::NaturalOptics,
            energy: Some(0.0),
        }
    }

    pub fn is_geodesic(&self) -> bool {
        matches!(self.kind, HamiltonianKind::GeodesicEta | HamiltonianKind::GeodesicTheta)
    }
}

/// Initial phase-space point of a Hamiltonian flow.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowStart {
    /// Momentum taken from the dual map, so the geodesic Hamiltonian is 1.
    Consistent(CoordVector),
    /// Arbitrary momenta; the Hamiltonian value is whatever they give.
    Decoupled { theta: Vec<f64>, eta: Vec<f64> },
}

impl FlowStart {
    fn resolve(&self, model: &dyn DuallyFlat) -> Result<DualState> {
        match self {
            FlowStart::Consistent(x) => {
                let (theta, eta) = dual_pair(model, x)?;
                Ok(DualState { theta, eta })
            }
            FlowStart::Decoupled { theta, eta } => {
                let m = model.dim();
                for v in [theta, eta] {
                    if v.len() != m {
                        return Err(Error::Dimension {
                            expected: m,
                            got: v.len(),
                        });
                    }
                }
                if theta.iter().chain(eta).any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("flow start"));
                }
                Ok(DualState {
                    theta: theta.clone(),
                    eta: eta.clone(),
                })
            }
        }
    }
}

/// Metric, its gradient, the squared index and its gradient at a position,
/// for either chart.
struct Geometry {
    g: DMatrix<f64>,
    dg: Vec<DMatrix<f64>>,
    n2: f64,
    dn2: Vec<f64>,
}

/// Eta-chart geometry: `g_ij(eta)` and `n^2(eta) = g_ij theta^i theta^j`
/// with `theta = theta(eta)`; `d n^2/d eta_i = theta dg_i theta + 2 (G g theta)_i`.
fn geometry_eta(model: &dyn DuallyFlat, eta: &[f64]) -> Geometry {
    let th = model.theta_of_eta(eta);
    let g = model.metric_lower_eta(eta);
    let dg = model.metric_lower_eta_grad(eta);
    let jac = model.metric_upper_theta(&th);
    let n2 = quad(&g, &th, &th);
    let corr = mat_vec(&jac, &mat_vec(&g, &th));
    let dn2 = (0..eta.len()).map(|i| quad(&dg[i], &th, &th) + 2.0 * corr[i]).collect();
    Geometry { g, dg, n2, dn2 }
}

fn geometry_theta(model: &dyn DuallyFlat, theta: &[f64]) -> Geometry {
    let et = model.eta_of_theta(theta);
    let g = model.metric_upper_theta(theta);
    let dg = model.metric_upper_theta_grad(theta);
    let jac = model.metric_lower_eta(&et);
    let n2 = quad(&g, &et, &et);
    let corr = mat_vec(&jac, &mat_vec(&g, &et));
    let dn2 = (0..theta.len()).map(|i| quad(&dg[i], &et, &et) + 2.0 * corr[i]).collect();
    Geometry { g, dg, n2, dn2 }
}

/// Value of the Hamiltonian of `spec` at a dual state. For the geodesic
/// kinds this is `sqrt(g~ p p)`; for natural_ig it is `1/2 g theta theta - 1/2 n^2`.
pub fn hamiltonian_value(model: &dyn DuallyFlat, spec: &HamiltonianSpec, state: &DualState) -> Result<f64> {
    let v = match spec.kind {
        HamiltonianKind::GeodesicEta => {
            let geo = geometry_eta(model, &state.eta);
            (quad(&geo.g, &state.theta, &state.theta) / geo.n2).sqrt()
        }
        HamiltonianKind::GeodesicTheta => {
            let geo = geometry_theta(model, &state.theta);
            (quad(&geo.g, &state.eta, &state.eta) / geo.n2).sqrt()
        }
        HamiltonianKind::NaturalIg => {
            let geo = geometry_eta(model, &state.eta);
            0.5 * quad(&geo.g, &state.theta, &state.theta) - 0.5 * geo.n2
        }
        HamiltonianKind::NaturalOptics => {
            return Err(Error::ModelMismatch(
                "natural_optics acts on ray states, not dual states".into(),
            ))
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("hamiltonian_value"))
    }
}

/// Integrates a geodesic Hamiltonian flow over `tau_span`.
///
/// Eta kind: `d eta/d tau = -g~ theta`, `d theta^i/d tau = 1/2 d_i g~ theta theta`.
/// Theta kind: `d theta/d tau = g~ eta`, `d eta_i/d tau = -1/2 d_i g~ eta eta`.
/// `t` and `s` are integrated alongside via `dt = d tau / n^2` and
/// `ds = d tau / n`, starting at zero.
pub fn geodesic_flow(
    model: &dyn DuallyFlat,
    spec: &HamiltonianSpec,
    start: &FlowStart,
    tau_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let eta_chart = match spec.kind {
        HamiltonianKind::GeodesicEta => true,
        HamiltonianKind::GeodesicTheta => false,
        _ => {
            return Err(Error::ModelMismatch(format!(
                "geodesic_flow needs a geodesic Hamiltonian, got {:?}",
                spec.kind
            )))
        }
    };
    let driver = if eta_chart { Driver::GeodesicEta } else { Driver::GeodesicTheta };
    let rhs = move |y: &[f64], dy: &mut [f64], m: usize| {
        let (pos, mom) = y.split_at(m);
        let mom = &mom[..m];
        let geo = if eta_chart {
            geometry_eta(model, pos)
        } else {
            geometry_theta(model, pos)
        };
        let v = mat_vec(&geo.g, mom);
        let kin = quad(&geo.g, mom, mom);
        let sign = if eta_chart { 1.0 } else { -1.0 };
        for i in 0..m {
            dy[i] = -sign * v[i] / geo.n2;
            let force = quad(&geo.dg[i], mom, mom) / geo.n2 - kin * geo.dn2[i] / (geo.n2 * geo.n2);
            dy[m + i] = sign * 0.5 * force;
        }
        dy[2 * m] = 1.0 / geo.n2;
        dy[2 * m + 1] = 1.0 / geo.n2.sqrt();
    };
    hamiltonian_integrate(model, driver, eta_chart, start, tau_span, cfg, rhs, |y, x, m| Sample {
        t: y[2 * m],
        s: y[2 * m + 1],
        tau: x,
        state: DualState::default(),
    })
}

/// Integrates the natural IG Hamiltonian over `t_span`:
/// `d eta/dt = -g theta`, `d theta^i/dt = 1/2 d_i g theta theta - 1/2 d_i n^2`.
/// `s` and `tau` accumulate via `ds = n dt`, `d tau = n^2 dt`.
pub fn natural_flow_t(
    model: &dyn DuallyFlat,
    spec: &HamiltonianSpec,
    start: &FlowStart,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    if spec.kind != HamiltonianKind::NaturalIg {
        return Err(Error::ModelMismatch(format!(
            "natural_flow_t needs the natural_ig Hamiltonian, got {:?}",
            spec.kind
        )));
    }
    let rhs = |y: &[f64], dy: &mut [f64], m: usize| {
        let (eta, th) = y.split_at(m);
        let th = &th[..m];
        let geo = geometry_eta(model, eta);
        let v = mat_vec(&geo.g, th);
        for i in 0..m {
            dy[i] = -v[i];
            dy[m + i] = 0.5 * quad(&geo.dg[i], th, th) - 0.5 * geo.dn2[i];
        }
        dy[2 * m] = geo.n2.max(0.0).sqrt();
        dy[2 * m + 1] = geo.n2;
    };
    hamiltonian_integrate(model, Driver::NaturalIg, true, start, t_span, cfg, rhs, |y, x, m| Sample {
        t: x,
        s: y[2 * m],
        tau: y[2 * m + 1],
        state: DualState::default(),
    })
}

#[allow(clippy::too_many_arguments)]
fn hamiltonian_integrate<R, C>(
    model: &dyn DuallyFlat,
    driver: Driver,
    eta_chart: bool,
    start: &FlowStart,
    span: (f64, f64),
    cfg: &IntegratorConfig,
    rhs: R,
    clocks: C,
) -> Result<Trajectory>
where
    R: Fn(&[f64], &mut [f64], usize),
    C: Fn(&[f64], f64, usize) -> Sample<DualState>,
{
    check_span(span)?;
    let m = model.dim();
    let s0 = start.resolve(model)?;
    let (pos0, mom0) = if eta_chart { (&s0.eta, &s0.theta) } else { (&s0.theta, &s0.eta) };
    let pos_check = |p: &[f64]| {
        if eta_chart {
            model.check_eta(p)
        } else {
            model.check_theta(p)
        }
    };
    pos_check(pos0).map_err(Error::Domain)?;
    let mut y0: Vec<f64> = pos0.iter().chain(mom0).copied().collect();
    y0.extend([0.0, 0.0]);
    let sol = solve_ode(
        |_x, y, dy| rhs(y, dy, m),
        |y| pos_check(&y[..m]).is_ok(),
        span.0,
        &y0,
        span.1,
        cfg,
    )?;
    let samples = sol
        .xs
        .iter()
        .zip(&sol.ys)
        .map(|(&x, y)| {
            let mut sample = clocks(y, x, m);
            let (pos, mom) = (y[..m].to_vec(), y[m..2 * m].to_vec());
            sample.state = if eta_chart {
                DualState { theta: mom, eta: pos }
            } else {
                DualState { theta: pos, eta: mom }
            };
            sample
        })
        .collect();
    Ok(Trajectory {
        driver,
        model: model.id(),
        termination: sol.termination,
        config: *cfg,
        samples,
    })
}

/// Max over samples of `|eta_of_theta(theta) - eta|`, the dual-chart
/// consistency of a flow.
pub fn dual_consistency_residual(model: &dyn DuallyFlat, traj: &Trajectory) -> f64 {
    traj.samples
        .iter()
        .map(|s| {
            model
                .eta_of_theta(&s.state.theta)
                .iter()
                .zip(&s.state.eta)
                .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()))
        })
        .fold(0.0, |a: f64, v| if v.is_nan() { f64::INFINITY } else { a.max(v) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{gamma_model, gaussian_model, GammaParams, GaussianParams};

    fn eta_start(eta: Vec<f64>) -> FlowStart {
        FlowStart::Consistent(CoordVector::eta(eta).unwrap())
    }

    fn drift(model: &dyn DuallyFlat, spec: &HamiltonianSpec, traj: &Trajectory) -> f64 {
        let h0 = hamiltonian_value(model, spec, &traj.first().state).unwrap();
        traj.samples
            .iter()
            .map(|s| (hamiltonian_value(model, spec, &s.state).unwrap() - h0).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn gaussian_geodesic_conserves_unit_hamiltonian() {
        let model = gaussian_model();
        let spec = HamiltonianSpec::geodesic_eta();
        let start = eta_start(vec![0.0, 1.0]);
        let traj = geodesic_flow(&model, &spec, &start, (0.0, 1.0), &IntegratorConfig::default()).unwrap();
        let h0 = hamiltonian_value(&model, &spec, &traj.first().state).unwrap();
        assert!((h0 - 1.0).abs() < 1e-14);
        assert!(drift(&model, &spec, &traj) < 1e-8);
        // d tau = n^2 dt with n^2 = 1/2
        assert!((traj.last().t - 2.0).abs() < 1e-10);
    }

    #[test]
    fn gamma_geodesic_keeps_shape_ratio() {
        let model = gamma_model();
        let spec = HamiltonianSpec::geodesic_eta();
        let start = eta_start(GammaParams::new(2.0, 3.0).unwrap().eta());
        let traj = geodesic_flow(&model, &spec, &start, (0.0, 1.0), &IntegratorConfig::default()).unwrap();
        assert!(drift(&model, &spec, &traj) < 1e-8);
        let ratio = |eta: &[f64]| {
            let p = GammaParams::from_eta(eta);
            (p.nu - 1.0) / p.beta
        };
        let r0 = ratio(&traj.first().state.eta);
        for s in &traj.samples {
            assert!((ratio(&s.state.eta) - r0).abs() < 1e-8);
        }
        assert!(dual_consistency_residual(&model, &traj) < 1e-8);
    }

    #[test]
    fn theta_geodesic_conserves_hamiltonian() {
        let model = gaussian_model();
        let spec = HamiltonianSpec::geodesic_theta();
        let start = FlowStart::Consistent(CoordVector::theta(GaussianParams::new(0.5, 2.0).unwrap().theta()).unwrap());
        let traj = geodesic_flow(&model, &spec, &start, (0.0, 0.5), &IntegratorConfig::default()).unwrap();
        assert!(drift(&model, &spec, &traj) < 1e-8);
        // eta grows as e^t
        let s = traj.last();
        let e0 = &traj.first().state.eta;
        for (e, e0) in s.state.eta.iter().zip(e0) {
            assert!((e - e0 * s.t.exp()).abs() < 1e-7);
        }
    }

    #[test]
    fn decoupled_start_records_hamiltonian() {
        let model = gaussian_model();
        let spec = HamiltonianSpec::geodesic_eta();
        let start = FlowStart::Decoupled {
            theta: vec![0.0, -1.0],
            eta: vec![0.0, 1.0],
        };
        let traj = geodesic_flow(&model, &spec, &start, (0.0, 0.5), &IntegratorConfig::default()).unwrap();
        let h0 = hamiltonian_value(&model, &spec, &traj.first().state).unwrap();
        assert!((h0 - 2.0).abs() < 1e-12);
        assert!(drift(&model, &spec, &traj) < 1e-8);
    }

    #[test]
    fn natural_flow_linearizes_theta() {
        let model = gaussian_model();
        let start = eta_start(GaussianParams::new(0.7, 1.5).unwrap().eta());
        let traj = natural_flow_t(&model, &HamiltonianSpec::natural_ig(), &start, (0.0, 2.0), &IntegratorConfig::default()).unwrap();
        let th0 = traj.first().state.theta.clone();
        for s in &traj.samples {
            for (th, th0) in s.state.theta.iter().zip(&th0) {
                assert!((th - th0 * (-s.t).exp()).abs() < 1e-6);
            }
        }
        assert!(drift(&model, &HamiltonianSpec::natural_ig(), &traj) < 1e-10);
    }

    #[test]
    fn zero_span_returns_start() {
        let model = gamma_model();
        let start = eta_start(GammaParams::new(1.0, 2.0).unwrap().eta());
        let traj = geodesic_flow(&model, &HamiltonianSpec::geodesic_eta(), &start, (0.0, 0.0), &IntegratorConfig::default()).unwrap();
        assert_eq!(traj.len(), 1);
        let traj = natural_flow_t(&model, &HamiltonianSpec::natural_ig(), &start, (0.0, 0.0), &IntegratorConfig::default()).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.first().state.eta, GammaParams::new(1.0, 2.0).unwrap().eta());
    }

    #[test]
    fn wrong_kind_rejected() {
        let model = gaussian_model();
        let start = eta_start(vec![0.0, 1.0]);
        let cfg = IntegratorConfig::default();
        assert!(geodesic_flow(&model, &HamiltonianSpec::natural_ig(), &start, (0.0, 1.0), &cfg).is_err());
        assert!(natural_flow_t(&model, &HamiltonianSpec::geodesic_eta(), &start, (0.0, 1.0), &cfg).is_err());
    }
}
