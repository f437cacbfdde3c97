//! Replicator dynamics on finite exponential families and their equivalence
//! with the linear flow `d theta/dt = -theta`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    check_span, Driver, IntegratorConfig, ReplicatorState, Sample, Series, Termination, Trajectory,
};
use crate::error::{Error, Result};
use crate::manifold::{quad, DuallyFlat};
use crate::models::FiniteExpFamily;

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub const SUM_TOL: f64 = 1e-12;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("probability vector"));
        }
        if let Some(p) = probs.iter().find(|p| **p < 0.0) {
            return Err(Error::Domain(format!("p >= 0 violated: {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::Domain(format!("sum p = 1 violated: sum = {sum}")));
        }
        Ok(ProbabilityVector(probs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// `-p(x) (ln p(x) - E_p[ln p])`, with `0 ln 0 = 0`.
fn replicator_field_raw(p: &[f64]) -> Vec<f64> {
    let plogp = |v: f64| if v > 0.0 { v * v.ln() } else { 0.0 };
    let mean_log: f64 = p.iter().map(|&v| plogp(v)).sum();
    p.iter().map(|&v| -(plogp(v) - v * mean_log)).collect()
}

/// The replicator vector field at a point of the simplex.
pub fn replicator_field(p: &ProbabilityVector) -> Vec<f64> {
    replicator_field_raw(&p.0)
}

/// The replicator vector field at `p_theta`.
pub fn replicator_rhs(family: &FiniteExpFamily, theta: &[f64]) -> Vec<f64> {
    replicator_field_raw(&family.probabilities(theta))
}

/// `dp(x)/dt` by the chain rule `p(x) (F(x) - eta) . d theta/dt` with
/// `d theta/dt = -rate theta`.
fn chain_rule_rate(family: &FiniteExpFamily, theta: &[f64], rate: f64) -> Vec<f64> {
    let p = family.probabilities(theta);
    let eta = family.mean(&p);
    family
        .stats()
        .iter()
        .zip(&p)
        .map(|(f, px)| {
            let centred: f64 = f.iter().zip(&eta).zip(theta).map(|((fx, e), th)| (fx - e) * th).sum();
            -rate * px * centred
        })
        .collect()
}

/// Max over outcomes of the difference between the chain-rule derivative
/// under `d theta/dt = -rate theta` and the replicator field.
pub fn equivalence_residual_with_rate(family: &FiniteExpFamily, theta: &[f64], rate: f64) -> f64 {
    chain_rule_rate(family, theta, rate)
        .iter()
        .zip(replicator_rhs(family, theta))
        .fold(0.0, |a: f64, (x, y)| a.max((x - y).abs()))
}

/// `equivalence_residual_with_rate` for the linear law `d theta/dt = -theta`.
pub fn equivalence_residual(family: &FiniteExpFamily, theta: &[f64]) -> f64 {
    equivalence_residual_with_rate(family, theta, 1.0)
}

/// Both routes of a replicator simulation.
#[derive(Debug, Clone)]
pub struct ReplicatorRun {
    /// `theta(t) = theta0 e^{-t}` with `eta` and `p_theta(t)` on the grid.
    pub closed_form: Trajectory<ReplicatorState>,
    /// The replicator equation integrated on the simplex, same grid.
    pub direct: Series,
    /// Largest `|sum p - 1|` removed by renormalization after a step.
    pub max_renormalization: f64,
}

impl ReplicatorRun {
    /// `max_t |p_direct(t) - p_theta(t)|_inf`.
    pub fn route_difference(&self) -> f64 {
        self.closed_form
            .samples
            .iter()
            .zip(&self.direct.values)
            .flat_map(|(s, d)| s.state.probs.iter().zip(d).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }
}

/// Runs the closed-form theta decay and a direct fixed-step RK4
/// integration of the replicator equation on the same uniform grid
/// (step `cfg.step`). The direct route renormalizes `p` after every step.
pub fn simulate_replicator(
    family: &FiniteExpFamily,
    theta0: &[f64],
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<ReplicatorRun> {
    check_span(t_span)?;
    cfg.validate()?;
    let m = family.dim();
    if theta0.len() != m {
        return Err(Error::Dimension {
            expected: m,
            got: theta0.len(),
        });
    }
    if theta0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("replicator start"));
    }
    let (a, b) = t_span;
    let n = if b > a {
        ((b - a) / cfg.step - 1e-9).ceil().max(1.0) as usize
    } else {
        0
    };
    if n > cfg.max_steps {
        return Err(Error::StepLimit(cfg.max_steps));
    }
    let h = if n > 0 { (b - a) / n as f64 } else { 0.0 };
    let grid: Vec<f64> = (0..=n).map(|k| if k == n { b } else { a + k as f64 * h }).collect();

    // closed-form route
    let mut states = Vec::with_capacity(grid.len());
    let mut n2 = Vec::with_capacity(grid.len());
    for &t in &grid {
        let theta: Vec<f64> = theta0.iter().map(|v| v * (-(t - a)).exp()).collect();
        let probs = family.probabilities(&theta);
        let eta = family.mean(&probs);
        n2.push(quad(&family.covariance(&probs), &theta, &theta));
        states.push(ReplicatorState { theta, eta, probs });
    }
    let speed: Vec<f64> = n2.iter().map(|v| v.sqrt()).collect();
    let s = trapezoid(&grid, &speed);
    let tau = trapezoid(&grid, &n2);
    let samples = states
        .into_iter()
        .enumerate()
        .map(|(k, state)| Sample {
            t: grid[k],
            s: s[k],
            tau: tau[k],
            state,
        })
        .collect();
    let closed_form = Trajectory {
        driver: Driver::Replicator,
        model: family.id(),
        termination: Termination::Completed,
        config: *cfg,
        samples,
    };

    // direct route
    let k_out = family.alphabet_size();
    let mut p = family.probabilities(theta0);
    let mut values = Vec::with_capacity(grid.len());
    values.push(p.clone());
    let mut max_renorm: f64 = 0.0;
    let mut tmp = vec![0.0; k_out];
    for _ in 0..n {
        let k1 = replicator_field_raw(&p);
        axpy(&mut tmp, &p, 0.5 * h, &k1);
        let k2 = replicator_field_raw(&tmp);
        axpy(&mut tmp, &p, 0.5 * h, &k2);
        let k3 = replicator_field_raw(&tmp);
        axpy(&mut tmp, &p, h, &k3);
        let k4 = replicator_field_raw(&tmp);
        for x in 0..k_out {
            p[x] += h / 6.0 * (k1[x] + 2.0 * k2[x] + 2.0 * k3[x] + k4[x]);
        }
        let sum: f64 = p.iter().sum();
        if !sum.is_finite() {
            return Err(Error::NonFinite("replicator integration"));
        }
        max_renorm = max_renorm.max((sum - 1.0).abs());
        p.iter_mut().for_each(|v| *v /= sum);
        values.push(p.clone());
    }
    log::debug!("replicator renormalization: max |sum p - 1| = {max_renorm:e}");
    Ok(ReplicatorRun {
        closed_form,
        direct: Series { t: grid, values },
        max_renormalization: max_renorm,
    })
}

fn axpy(out: &mut [f64], y: &[f64], h: f64, k: &[f64]) {
    for i in 0..out.len() {
        out[i] = y[i] + h * k[i];
    }
}

fn trapezoid(x: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for k in 1..x.len() {
        out[k] = out[k - 1] + 0.5 * (x[k] - x[k - 1]) * (f[k] + f[k - 1]);
    }
    out
}
