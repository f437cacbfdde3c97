//! Dually flat structure: dual charts, Legendre-paired potentials and the
//! Fisher metric in both charts, together with the residual checks that
//! certify a model implementation.
//!
//! Conventions. `theta` are the natural (affine) coordinates, `eta` the
//! expectation coordinates. The potentials satisfy
//!
//! ```text
//! eta_i   = dPsi/dtheta^i        theta^i = dPsi*/deta_i
//! g_ij(eta)   = d eta_i / d theta^j      (Hessian of Psi)
//! g^ij(theta) = d theta^i / d eta_j      (Hessian of Psi*)
//! ```
//!
//! so `g^ij(theta(x)) g_jk(eta(x)) = delta^i_k` at every point `x`.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which affine chart a coordinate vector lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chart {
    Theta,
    Eta,
}

impl Chart {
    pub fn dual(self) -> Chart {
        match self {
            Chart::Theta => Chart::Eta,
            Chart::Eta => Chart::Theta,
        }
    }
}

impl fmt::Display for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Chart::Theta => f.write_str("theta"),
            Chart::Eta => f.write_str("eta"),
        }
    }
}

/// An m-vector tagged with its chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordVector {
    pub chart: Chart,
    pub values: Vec<f64>,
}

impl CoordVector {
    pub fn new(chart: Chart, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coordinate construction"));
        }
        Ok(CoordVector { chart, values })
    }

    pub fn theta(values: Vec<f64>) -> Result<Self> {
        Self::new(Chart::Theta, values)
    }

    pub fn eta(values: Vec<f64>) -> Result<Self> {
        Self::new(Chart::Eta, values)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// A symmetric positive-definite matrix, validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix(DMatrix<f64>);

impl MetricMatrix {
    pub const SYMMETRY_TOL: f64 = 1e-12;

    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::SingularMetric(format!(
                "matrix is {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMetric("non-finite entry".into()));
        }
        let scale = entries.amax().max(1.0);
        let asym = (&entries - entries.transpose()).amax();
        if asym > Self::SYMMETRY_TOL * scale {
            return Err(Error::SingularMetric(format!("asymmetry {asym:e}")));
        }
        if entries.clone().cholesky().is_none() {
            return Err(Error::SingularMetric("Cholesky factorization failed".into()));
        }
        Ok(MetricMatrix(entries))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// `g(u, v) = u^T G v`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        quad(&self.0, u, v)
    }
}

/// `u^T G v` for plain slices.
pub fn quad(g: &DMatrix<f64>, u: &[f64], v: &[f64]) -> f64 {
    let m = g.nrows();
    let mut acc = 0.0;
    for i in 0..m {
        let mut row = 0.0;
        for j in 0..m {
            row += g[(i, j)] * v[j];
        }
        acc += u[i] * row;
    }
    acc
}

/// `G v` for plain slices.
pub fn mat_vec(g: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..g.nrows())
        .map(|i| (0..g.ncols()).map(|j| g[(i, j)] * v[j]).sum())
        .collect()
}

/// A dually flat statistical manifold.
///
/// Implementors supply the potentials, the dual maps and both metric forms.
/// Metric derivatives default to central differences; models with closed
/// forms override them.
pub trait DuallyFlat: Send + Sync {
    /// Stable identifier, e.g. `"gaussian"`.
    fn id(&self) -> String;

    fn dim(&self) -> usize;

    /// `Err(predicate)` names the violated domain predicate.
    fn check_theta(&self, theta: &[f64]) -> std::result::Result<(), String>;

    fn check_eta(&self, eta: &[f64]) -> std::result::Result<(), String>;

    /// Theta-potential Psi(theta).
    fn psi(&self, theta: &[f64]) -> f64;

    /// Eta-potential Psi*(eta).
    fn psi_star(&self, eta: &[f64]) -> f64;

    fn eta_of_theta(&self, theta: &[f64]) -> Vec<f64>;

    fn theta_of_eta(&self, eta: &[f64]) -> Vec<f64>;

    /// `g_ij(eta)`, the metric acting on theta-vectors.
    fn metric_lower_eta(&self, eta: &[f64]) -> DMatrix<f64>;

    /// `g^ij(theta)`, the metric acting on eta-vectors.
    fn metric_upper_theta(&self, theta: &[f64]) -> DMatrix<f64>;

    /// `d g_jk(eta) / d eta_i`, one matrix per `i`.
    fn metric_lower_eta_grad(&self, eta: &[f64]) -> Vec<DMatrix<f64>> {
        central_matrix_grad(eta, |x| self.metric_lower_eta(x))
    }

    /// `d g^jk(theta) / d theta^i`, one matrix per `i`.
    fn metric_upper_theta_grad(&self, theta: &[f64]) -> Vec<DMatrix<f64>> {
        central_matrix_grad(theta, |x| self.metric_upper_theta(x))
    }

    fn check(&self, x: &CoordVector) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        if x.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coordinate input"));
        }
        let res = match x.chart {
            Chart::Theta => self.check_theta(&x.values),
            Chart::Eta => self.check_eta(&x.values),
        };
        res.map_err(Error::Domain)
    }

    fn in_domain(&self, x: &CoordVector) -> bool {
        self.check(x).is_ok()
    }
}

/// Relative step used for finite-difference metric derivatives.
pub const FD_REL_STEP: f64 = 1e-6;

pub(crate) fn central_matrix_grad<F>(x: &[f64], f: F) -> Vec<DMatrix<f64>>
where
    F: Fn(&[f64]) -> DMatrix<f64>,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = FD_REL_STEP * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn finite_or(values: Vec<f64>, what: &'static str) -> Result<Vec<f64>> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(values)
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Maps `x` to the dual chart.
pub fn coord_map(model: &dyn DuallyFlat, x: &CoordVector) -> Result<CoordVector> {
    model.check(x)?;
    let values = match x.chart {
        Chart::Theta => finite_or(model.eta_of_theta(&x.values), "eta_of_theta")?,
        Chart::Eta => finite_or(model.theta_of_eta(&x.values), "theta_of_eta")?,
    };
    Ok(CoordVector {
        chart: x.chart.dual(),
        values,
    })
}

/// Returns `(theta, eta)` for a point given in either chart.
pub fn dual_pair(model: &dyn DuallyFlat, x: &CoordVector) -> Result<(Vec<f64>, Vec<f64>)> {
    let y = coord_map(model, x)?;
    Ok(match x.chart {
        Chart::Theta => (x.values.clone(), y.values),
        Chart::Eta => (y.values, x.values.clone()),
    })
}

/// `g_ij(eta)` for an eta-point, `g^ij(theta)` for a theta-point.
pub fn metric_at(model: &dyn DuallyFlat, x: &CoordVector) -> Result<MetricMatrix> {
    model.check(x)?;
    let raw = match x.chart {
        Chart::Eta => model.metric_lower_eta(&x.values),
        Chart::Theta => model.metric_upper_theta(&x.values),
    };
    MetricMatrix::new(raw)
}

/// `|Psi(theta) + Psi*(eta(theta)) - theta . eta(theta)|`.
pub fn legendre_residual(model: &dyn DuallyFlat, theta: &CoordVector) -> Result<f64> {
    if theta.chart != Chart::Theta {
        return Err(Error::Domain("legendre_residual expects a theta-point".into()));
    }
    model.check(theta)?;
    let eta = finite_or(model.eta_of_theta(&theta.values), "eta_of_theta")?;
    let dot: f64 = theta.values.iter().zip(&eta).map(|(a, b)| a * b).sum();
    let r = (model.psi(&theta.values) + model.psi_star(&eta) - dot).abs();
    if r.is_finite() {
        Ok(r)
    } else {
        Err(Error::NonFinite("legendre_residual"))
    }
}

/// `max_{i,k} |g^ij(theta(x)) g_jk(eta(x)) - delta^i_k|`.
pub fn metric_duality_residual(model: &dyn DuallyFlat, x: &CoordVector) -> Result<f64> {
    let (theta, eta) = dual_pair(model, x)?;
    let upper = MetricMatrix::new(model.metric_upper_theta(&theta))?;
    let lower = MetricMatrix::new(model.metric_lower_eta(&eta))?;
    let prod = upper.as_matrix() * lower.as_matrix();
    let id = DMatrix::<f64>::identity(prod.nrows(), prod.ncols());
    Ok((prod - id).amax())
}

/// Central-difference gradient of the chart's potential (`Psi*` on the
/// eta-chart, `Psi` on the theta-chart) with absolute step `h`.
pub fn fd_gradient(model: &dyn DuallyFlat, x: &CoordVector, h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidConfig(format!("finite-difference step {h} must be > 0")));
    }
    model.check(x)?;
    let potential = |v: &[f64]| match x.chart {
        Chart::Eta => model.psi_star(v),
        Chart::Theta => model.psi(v),
    };
    let mut probe = x.values.clone();
    let mut grad = Vec::with_capacity(x.dim());
    for i in 0..x.dim() {
        let mut eval = |offset: f64| -> Result<f64> {
            probe[i] = x.values[i] + offset;
            let p = CoordVector {
                chart: x.chart,
                values: probe.clone(),
            };
            model.check(&p)?;
            Ok(potential(&probe))
        };
        let up = eval(h)?;
        let down = eval(-h)?;
        probe[i] = x.values[i];
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Central-difference check of `dPsi*/deta = theta` (eta-point) or
/// `dPsi/dtheta = eta` (theta-point). Returns the max component error.
pub fn fd_gradient_check(model: &dyn DuallyFlat, x: &CoordVector, h: f64) -> Result<f64> {
    let fd = fd_gradient(model, x, h)?;
    let analytic = coord_map(model, x)?.values;
    let worst = fd.iter().zip(&analytic).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    if worst.is_finite() {
        Ok(worst)
    } else {
        Err(Error::NonFinite("fd_gradient_check"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_matrix_rejects_asymmetric_and_indefinite() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(MetricMatrix::new(asym), Err(Error::SingularMetric(_))));
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(MetricMatrix::new(indef), Err(Error::SingularMetric(_))));
        let ok = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert!(MetricMatrix::new(ok).is_ok());
    }

    #[test]
    fn coord_vector_rejects_nan() {
        assert!(CoordVector::eta(vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn quad_form() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        assert_eq!(quad(&g, &[1.0, 1.0], &[1.0, 1.0]), 7.0);
        assert_eq!(mat_vec(&g, &[1.0, 0.0]), vec![2.0, 1.0]);
    }
}
