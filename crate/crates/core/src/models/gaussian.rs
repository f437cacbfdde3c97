use std::f64::consts::{E, PI};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::DuallyFlat;

/// Mean and variance of a normal distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mu: f64,
    pub sigma2: f64,
}

impl GaussianParams {
    pub fn new(mu: f64, sigma2: f64) -> Result<Self> {
        if !mu.is_finite() || !sigma2.is_finite() {
            return Err(Error::NonFinite("gaussian parameters"));
        }
        if !(sigma2 > 0.0) {
            return Err(Error::Domain(format!("sigma2 > 0 violated (sigma2 = {sigma2})")));
        }
        Ok(GaussianParams { mu, sigma2 })
    }

    pub fn eta(&self) -> Vec<f64> {
        vec![self.mu, self.mu * self.mu + self.sigma2]
    }

    pub fn theta(&self) -> Vec<f64> {
        vec![self.mu / self.sigma2, -0.5 / self.sigma2]
    }

    pub fn from_eta(eta: &[f64]) -> Self {
        GaussianParams {
            mu: eta[0],
            sigma2: eta[1] - eta[0] * eta[0],
        }
    }

    pub fn from_theta(theta: &[f64]) -> Self {
        let sigma2 = -0.5 / theta[1];
        GaussianParams {
            mu: theta[0] * sigma2,
            sigma2,
        }
    }

    /// `n*(theta) = sqrt((1 + mu^4/sigma^4) / 2)`.
    pub fn theta_chart_index(&self) -> f64 {
        let r = self.mu * self.mu / self.sigma2;
        (0.5 * (1.0 + r * r)).sqrt()
    }
}

/// Refractive index of the eta-chart gradient flow; independent of the point.
pub const GAUSSIAN_INDEX: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Univariate normal family in its (mu/sigma^2, -1/(2 sigma^2)) and
/// (mu, mu^2 + sigma^2) coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    lower_metric_scale: f64,
}

impl Default for GaussianModel {
    fn default() -> Self {
        GaussianModel {
            lower_metric_scale: 1.0,
        }
    }
}

impl GaussianModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fault-injection variant: `g_ij(eta)` multiplied by `scale`.
    pub fn with_lower_metric_scale(scale: f64) -> Self {
        GaussianModel {
            lower_metric_scale: scale,
        }
    }
}

impl DuallyFlat for GaussianModel {
    fn id(&self) -> String {
        "gaussian".into()
    }

    fn dim(&self) -> usize {
        2
    }

    fn check_theta(&self, theta: &[f64]) -> std::result::Result<(), String> {
        if theta[1] < 0.0 {
            Ok(())
        } else {
            Err(format!("theta_2 < 0 (sigma2 > 0) violated: theta_2 = {}", theta[1]))
        }
    }

    fn check_eta(&self, eta: &[f64]) -> std::result::Result<(), String> {
        let var = eta[1] - eta[0] * eta[0];
        if var > 0.0 {
            Ok(())
        } else {
            Err(format!("eta_2 - eta_1^2 > 0 (sigma2 > 0) violated: eta_2 - eta_1^2 = {var}"))
        }
    }

    // Psi is obtained from the Legendre identity.
    fn psi(&self, theta: &[f64]) -> f64 {
        let eta = self.eta_of_theta(theta);
        theta[0] * eta[0] + theta[1] * eta[1] - self.psi_star(&eta)
    }

    fn psi_star(&self, eta: &[f64]) -> f64 {
        -0.5 * (2.0 * PI * E).ln() - 0.5 * (eta[1] - eta[0] * eta[0]).ln()
    }

    fn eta_of_theta(&self, theta: &[f64]) -> Vec<f64> {
        GaussianParams::from_theta(theta).eta()
    }

    fn theta_of_eta(&self, eta: &[f64]) -> Vec<f64> {
        GaussianParams::from_eta(eta).theta()
    }

    fn metric_lower_eta(&self, eta: &[f64]) -> DMatrix<f64> {
        let (e1, e2) = (eta[0], eta[1]);
        let f = 2.0 * (e2 - e1 * e1) * self.lower_metric_scale;
        DMatrix::from_row_slice(2, 2, &[0.5 * f, f * e1, f * e1, f * (e1 * e1 + e2)])
    }

    fn metric_upper_theta(&self, theta: &[f64]) -> DMatrix<f64> {
        let (t1, t2) = (theta[0], theta[1]);
        DMatrix::from_row_slice(
            2,
            2,
            &[2.0 * (t1 * t1 - t2), 2.0 * t1 * t2, 2.0 * t1 * t2, 2.0 * t2 * t2],
        )
    }

    fn metric_lower_eta_grad(&self, eta: &[f64]) -> Vec<DMatrix<f64>> {
        // g11 = v, g12 = 2 v e1, g22 = 2 (e2^2 - e1^4), v = e2 - e1^2
        let (e1, e2) = (eta[0], eta[1]);
        let s = self.lower_metric_scale;
        let d1 = [-2.0 * e1, 2.0 * e2 - 6.0 * e1 * e1, -8.0 * e1 * e1 * e1];
        let d2 = [1.0, 2.0 * e1, 4.0 * e2];
        [d1, d2]
            .iter()
            .map(|d| DMatrix::from_row_slice(2, 2, &[s * d[0], s * d[1], s * d[1], s * d[2]]))
            .collect()
    }

    fn metric_upper_theta_grad(&self, theta: &[f64]) -> Vec<DMatrix<f64>> {
        let (t1, t2) = (theta[0], theta[1]);
        vec![
            DMatrix::from_row_slice(2, 2, &[4.0 * t1, 2.0 * t2, 2.0 * t2, 0.0]),
            DMatrix::from_row_slice(2, 2, &[-2.0, 2.0 * t1, 2.0 * t1, 4.0 * t2]),
        ]
    }
}
