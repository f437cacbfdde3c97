use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::DuallyFlat;

/// Exponential family on a finite alphabet:
/// `p_theta(x) = exp(theta . F(x) - Psi(theta))`, `x = 0..K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteExpFamily {
    stats: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct StatsFile {
    stats: Vec<Vec<f64>>,
}

const NEWTON_MAX_ITER: usize = 200;

impl FiniteExpFamily {
    /// `stats[x]` is the sufficient-statistic vector `F(x)`.
    pub fn new(stats: Vec<Vec<f64>>) -> Result<Self> {
        let k = stats.len();
        if k < 2 {
            return Err(Error::Identifiability(format!("alphabet size {k} < 2")));
        }
        let m = stats[0].len();
        if m == 0 {
            return Err(Error::Identifiability("zero-dimensional statistics".into()));
        }
        if stats.iter().any(|row| row.len() != m) {
            return Err(Error::Identifiability("ragged statistics rows".into()));
        }
        if stats.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sufficient statistics"));
        }
        for a in 0..k {
            for b in (a + 1)..k {
                if stats[a] == stats[b] {
                    return Err(Error::Identifiability(format!(
                        "outcomes {a} and {b} have identical statistics"
                    )));
                }
            }
        }
        // [1 | F] must have full column rank m + 1
        let design = DMatrix::from_fn(k, m + 1, |r, c| if c == 0 { 1.0 } else { stats[r][c - 1] });
        let sv = design.singular_values();
        let smax = sv.max();
        let smin = sv.min();
        if k < m + 1 || smin <= 1e-10 * smax {
            return Err(Error::Identifiability(
                "statistics together with the constant are linearly dependent".into(),
            ));
        }
        Ok(FiniteExpFamily { stats })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let parsed: StatsFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(parsed.stats)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn alphabet_size(&self) -> usize {
        self.stats.len()
    }

    pub fn stats(&self) -> &[Vec<f64>] {
        &self.stats
    }

    fn dot(theta: &[f64], f: &[f64]) -> f64 {
        theta.iter().zip(f).map(|(a, b)| a * b).sum()
    }

    /// Log-partition `Psi(theta) = ln sum_x exp(theta . F(x))`.
    pub fn log_partition(&self, theta: &[f64]) -> f64 {
        let scores: Vec<f64> = self.stats.iter().map(|f| Self::dot(theta, f)).collect();
        let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        top + scores.iter().map(|s| (s - top).exp()).sum::<f64>().ln()
    }

    /// `p_theta(x)` for every outcome.
    pub fn probabilities(&self, theta: &[f64]) -> Vec<f64> {
        let scores: Vec<f64> = self.stats.iter().map(|f| Self::dot(theta, f)).collect();
        let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|v| v / z).collect()
    }

    /// Mean of `F` under `p`.
    pub fn mean(&self, p: &[f64]) -> Vec<f64> {
        let m = self.stats[0].len();
        let mut out = vec![0.0; m];
        for (px, f) in p.iter().zip(&self.stats) {
            for j in 0..m {
                out[j] += px * f[j];
            }
        }
        out
    }

    /// Covariance of `F` under `p`.
    pub fn covariance(&self, p: &[f64]) -> DMatrix<f64> {
        let mean = self.mean(p);
        let m = mean.len();
        let mut cov = DMatrix::zeros(m, m);
        for (px, f) in p.iter().zip(&self.stats) {
            for i in 0..m {
                for j in 0..m {
                    cov[(i, j)] += px * (f[i] - mean[i]) * (f[j] - mean[j]);
                }
            }
        }
        cov
    }

    /// Third central moments `E[(F-eta)_i (F-eta)_j (F-eta)_k]`, one
    /// matrix per `k`.
    fn third_cumulant(&self, p: &[f64]) -> Vec<DMatrix<f64>> {
        let mean = self.mean(p);
        let m = mean.len();
        let mut out = vec![DMatrix::zeros(m, m); m];
        for (px, f) in p.iter().zip(&self.stats) {
            let c: Vec<f64> = f.iter().zip(&mean).map(|(a, b)| a - b).collect();
            for (k, slab) in out.iter_mut().enumerate() {
                for i in 0..m {
                    for j in 0..m {
                        slab[(i, j)] += px * c[i] * c[j] * c[k];
                    }
                }
            }
        }
        out
    }

    /// Newton's method on the convex `Psi(theta) - theta . eta`, with
    /// backtracking while far from the optimum and full steps once the
    /// Newton decrement is small. Converged iterates take a short final
    /// Newton step; near the hull boundary the steps stay long and the
    /// solve returns `None`.
    fn solve_theta(&self, eta: &[f64]) -> Option<Vec<f64>> {
        let m = eta.len();
        if eta.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let scale = self
            .stats
            .iter()
            .flatten()
            .fold(1.0_f64, |a, v| a.max(v.abs()));
        let objective = |th: &[f64]| self.log_partition(th) - Self::dot(th, eta);
        let residual = |th: &[f64]| {
            let p = self.probabilities(th);
            let grad: Vec<f64> = self.mean(&p).iter().zip(eta).map(|(a, b)| a - b).collect();
            (p, grad)
        };
        let sup = |v: &[f64]| v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        let mut theta = vec![0.0; m];
        for _ in 0..NEWTON_MAX_ITER {
            let (p, grad) = residual(&theta);
            let step = self.covariance(&p).cholesky()?.solve(&DVector::from_vec(grad.clone()));
            if sup(step.as_slice()) <= 1e-9 * (1.0 + sup(&theta)) && sup(&grad) <= 1e-10 * scale {
                for (a, s) in theta.iter_mut().zip(step.iter()) {
                    *a -= s;
                }
                return Some(theta);
            }
            let decrement: f64 = step.iter().zip(&grad).map(|(a, b)| a * b).sum();
            let mut t = 1.0;
            if decrement > 1e-8 {
                let value = objective(&theta);
                while t > 1e-12 {
                    let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
                    if objective(&trial) <= value - 0.25 * t * decrement {
                        break;
                    }
                    t *= 0.5;
                }
            }
            for (a, s) in theta.iter_mut().zip(step.iter()) {
                *a -= t * s;
            }
            if theta.iter().any(|v| !v.is_finite() || v.abs() > 1e6) {
                return None;
            }
        }
        None
    }
}

impl DuallyFlat for FiniteExpFamily {
    fn id(&self) -> String {
        "finite".into()
    }

    fn dim(&self) -> usize {
        self.stats[0].len()
    }

    fn check_theta(&self, _theta: &[f64]) -> std::result::Result<(), String> {
        Ok(())
    }

    fn check_eta(&self, eta: &[f64]) -> std::result::Result<(), String> {
        match self.solve_theta(eta) {
            Some(_) => Ok(()),
            None => Err("eta in the interior of the convex hull of F violated".into()),
        }
    }

    fn psi(&self, theta: &[f64]) -> f64 {
        self.log_partition(theta)
    }

    /// Negative Shannon entropy, evaluated as `theta . eta - Psi(theta)`.
    fn psi_star(&self, eta: &[f64]) -> f64 {
        let theta = self.theta_of_eta(eta);
        Self::dot(&theta, eta) - self.log_partition(&theta)
    }

    fn eta_of_theta(&self, theta: &[f64]) -> Vec<f64> {
        self.mean(&self.probabilities(theta))
    }

    fn theta_of_eta(&self, eta: &[f64]) -> Vec<f64> {
        self.solve_theta(eta)
            .unwrap_or_else(|| vec![f64::NAN; eta.len()])
    }

    fn metric_lower_eta(&self, eta: &[f64]) -> DMatrix<f64> {
        let theta = self.theta_of_eta(eta);
        self.covariance(&self.probabilities(&theta))
    }

    fn metric_upper_theta(&self, theta: &[f64]) -> DMatrix<f64> {
        let cov = self.covariance(&self.probabilities(theta));
        let m = cov.nrows();
        cov.try_inverse()
            .unwrap_or_else(|| DMatrix::from_element(m, m, f64::NAN))
    }

    fn metric_lower_eta_grad(&self, eta: &[f64]) -> Vec<DMatrix<f64>> {
        // d g_jk / d eta_i = sum_l kappa3_{jkl} g^{li}
        let theta = self.theta_of_eta(eta);
        let p = self.probabilities(&theta);
        let k3 = self.third_cumulant(&p);
        let upper = self.metric_upper_theta(&theta);
        let m = eta.len();
        (0..m)
            .map(|i| {
                let mut acc = DMatrix::zeros(m, m);
                for (l, slab) in k3.iter().enumerate() {
                    acc += slab * upper[(l, i)];
                }
                acc
            })
            .collect()
    }

    fn metric_upper_theta_grad(&self, theta: &[f64]) -> Vec<DMatrix<f64>> {
        // d G^{-1} = -G^{-1} (dG) G^{-1}
        let p = self.probabilities(theta);
        let upper = self.metric_upper_theta(theta);
        self.third_cumulant(&p)
            .iter()
            .map(|slab| -(&upper * slab * &upper))
            .collect()
    }
}
