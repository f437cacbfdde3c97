use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::special::{digamma, ln_gamma, tetragamma, trigamma};
use crate::error::{Error, Result};
use crate::manifold::DuallyFlat;

/// Inverse scale `beta` and shape `nu` of a Gamma distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub beta: f64,
    pub nu: f64,
}

impl GammaParams {
    pub fn new(beta: f64, nu: f64) -> Result<Self> {
        if !beta.is_finite() || !nu.is_finite() {
            return Err(Error::NonFinite("gamma parameters"));
        }
        if !(beta > 0.0) {
            return Err(Error::Domain(format!("beta > 0 violated (beta = {beta})")));
        }
        if !(nu > 0.0) {
            return Err(Error::Domain(format!("nu > 0 violated (nu = {nu})")));
        }
        Ok(GammaParams { beta, nu })
    }

    pub fn theta(&self) -> Vec<f64> {
        vec![-self.beta, self.nu - 1.0]
    }

    pub fn eta(&self) -> Vec<f64> {
        vec![self.nu / self.beta, digamma(self.nu) - self.beta.ln()]
    }

    pub fn from_theta(theta: &[f64]) -> Self {
        GammaParams {
            beta: -theta[0],
            nu: theta[1] + 1.0,
        }
    }

    /// Inverts the eta-map. NaN fields if `eta` is outside the domain.
    pub fn from_eta(eta: &[f64]) -> Self {
        let nu = shape_from_eta(eta[0], eta[1]);
        GammaParams {
            beta: nu / eta[0],
            nu,
        }
    }

    /// `n(nu) = sqrt(2 - nu + phi'(nu) (nu - 1)^2)`.
    pub fn index(&self) -> f64 {
        gamma_index(self.nu)
    }
}

/// Closed-form refractive index of the Gamma eta-chart flow.
pub fn gamma_index(nu: f64) -> f64 {
    (2.0 - nu + trigamma(nu) * (nu - 1.0).powi(2)).sqrt()
}

/// Solves `phi(nu) - ln(nu / eta_1) = eta_2` for `nu`.
///
/// `phi(nu) - ln nu` increases monotonically from -inf to 0, so a root
/// exists iff `eta_1 > 0` and `eta_2 - ln eta_1 < 0`. Newton iteration,
/// safeguarded by a bracket and bisection.
pub fn shape_from_eta(eta1: f64, eta2: f64) -> f64 {
    if !(eta1 > 0.0) || !eta1.is_finite() || !eta2.is_finite() {
        return f64::NAN;
    }
    let c = eta2 - eta1.ln();
    if !(c < 0.0) {
        return f64::NAN;
    }
    let f = |nu: f64| digamma(nu) - nu.ln() - c;
    // asymptotic guess from phi(nu) - ln nu ~ -1/(2nu) - 1/(12nu^2)
    let mut nu = (-6.0 - (36.0 - 48.0 * c).sqrt()) / (24.0 * c);
    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    for _ in 0..200 {
        let fv = f(nu);
        if fv == 0.0 {
            return nu;
        }
        if fv < 0.0 {
            lo = lo.max(nu);
        } else {
            hi = hi.min(nu);
        }
        let slope = trigamma(nu) - 1.0 / nu;
        let mut next = nu - fv / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() {
                if lo > 0.0 {
                    (lo * hi).sqrt()
                } else {
                    0.5 * hi
                }
            } else {
                2.0 * nu.max(lo)
            };
        }
        if (next - nu).abs() <= 4.0 * f64::EPSILON * nu {
            return next;
        }
        nu = next;
    }
    nu
}

/// Gamma family in (-beta, nu - 1) and (nu/beta, phi(nu) - ln beta)
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaModel {
    trigamma_scale: f64,
}

impl Default for GammaModel {
    fn default() -> Self {
        GammaModel { trigamma_scale: 1.0 }
    }
}

impl GammaModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fault-injection variant: the trigamma entry of `g_ij(eta)` is
    /// multiplied by `1 + rel`. `g^ij(theta)` keeps the exact formula.
    pub fn with_trigamma_perturbation(rel: f64) -> Self {
        GammaModel {
            trigamma_scale: 1.0 + rel,
        }
    }

    fn lower_from_params(&self, p: GammaParams) -> DMatrix<f64> {
        let GammaParams { beta, nu } = p;
        DMatrix::from_row_slice(
            2,
            2,
            &[
                nu / (beta * beta),
                1.0 / beta,
                1.0 / beta,
                trigamma(nu) * self.trigamma_scale,
            ],
        )
    }

    fn upper_from_params(p: GammaParams) -> DMatrix<f64> {
        let GammaParams { beta, nu } = p;
        let tg = trigamma(nu);
        let d = nu * tg - 1.0;
        DMatrix::from_row_slice(2, 2, &[beta * beta * tg / d, -beta / d, -beta / d, nu / d])
    }

    /// `(d g / d beta, d g / d nu)` of the upper metric.
    fn upper_param_grads(p: GammaParams) -> (DMatrix<f64>, DMatrix<f64>) {
        let GammaParams { beta, nu } = p;
        let tg = trigamma(nu);
        let qg = tetragamma(nu);
        let d = nu * tg - 1.0;
        let dd = tg + nu * qg;
        let d_beta = DMatrix::from_row_slice(2, 2, &[2.0 * beta * tg / d, -1.0 / d, -1.0 / d, 0.0]);
        let m = DMatrix::from_row_slice(2, 2, &[beta * beta * tg, -beta, -beta, nu]);
        let dm = DMatrix::from_row_slice(2, 2, &[beta * beta * qg, 0.0, 0.0, 1.0]);
        let d_nu = dm / d - m * (dd / (d * d));
        (d_beta, d_nu)
    }
}

impl DuallyFlat for GammaModel {
    fn id(&self) -> String {
        "gamma".into()
    }

    fn dim(&self) -> usize {
        2
    }

    fn check_theta(&self, theta: &[f64]) -> std::result::Result<(), String> {
        if !(theta[0] < 0.0) {
            return Err(format!("beta > 0 violated: beta = {}", -theta[0]));
        }
        if !(theta[1] > -1.0) {
            return Err(format!("nu > 0 violated: nu = {}", theta[1] + 1.0));
        }
        Ok(())
    }

    fn check_eta(&self, eta: &[f64]) -> std::result::Result<(), String> {
        if !(eta[0] > 0.0) {
            return Err(format!("eta_1 = nu/beta > 0 violated: eta_1 = {}", eta[0]));
        }
        let c = eta[1] - eta[0].ln();
        if !(c < 0.0) {
            return Err(format!(
                "eta_2 < ln eta_1 (beta > 0, nu > 0) violated: eta_2 - ln eta_1 = {c}"
            ));
        }
        Ok(())
    }

    fn psi(&self, theta: &[f64]) -> f64 {
        let p = GammaParams::from_theta(theta);
        ln_gamma(p.nu) - p.nu * p.beta.ln()
    }

    // Negative differential entropy of the Gamma law.
    fn psi_star(&self, eta: &[f64]) -> f64 {
        let GammaParams { beta, nu } = GammaParams::from_eta(eta);
        -nu + beta.ln() - ln_gamma(nu) + (nu - 1.0) * digamma(nu)
    }

    fn eta_of_theta(&self, theta: &[f64]) -> Vec<f64> {
        GammaParams::from_theta(theta).eta()
    }

    fn theta_of_eta(&self, eta: &[f64]) -> Vec<f64> {
        GammaParams::from_eta(eta).theta()
    }

    fn metric_lower_eta(&self, eta: &[f64]) -> DMatrix<f64> {
        self.lower_from_params(GammaParams::from_eta(eta))
    }

    fn metric_upper_theta(&self, theta: &[f64]) -> DMatrix<f64> {
        Self::upper_from_params(GammaParams::from_theta(theta))
    }

    fn metric_lower_eta_grad(&self, eta: &[f64]) -> Vec<DMatrix<f64>> {
        let p = GammaParams::from_eta(eta);
        let GammaParams { beta, nu } = p;
        // d beta / d eta_i = -g^{i1}, d nu / d eta_i = g^{i2}
        let jac = Self::upper_from_params(p);
        let b2 = beta * beta;
        let d_beta =
            DMatrix::from_row_slice(2, 2, &[-2.0 * nu / (b2 * beta), -1.0 / b2, -1.0 / b2, 0.0]);
        let d_nu = DMatrix::from_row_slice(
            2,
            2,
            &[1.0 / b2, 0.0, 0.0, tetragamma(nu) * self.trigamma_scale],
        );
        (0..2)
            .map(|i| &d_beta * (-jac[(i, 0)]) + &d_nu * jac[(i, 1)])
            .collect()
    }

    fn metric_upper_theta_grad(&self, theta: &[f64]) -> Vec<DMatrix<f64>> {
        // theta^1 = -beta, theta^2 = nu - 1
        let (d_beta, d_nu) = Self::upper_param_grads(GammaParams::from_theta(theta));
        vec![-d_beta, d_nu]
    }
}
