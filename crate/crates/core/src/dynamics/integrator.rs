//! Fixed-step RK4 and adaptive Runge-Kutta-Fehlberg 4(5) drivers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4Fixed,
    Rkf45Adaptive,
}

/// What to do when a step leaves the manifold domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainGuard {
    StopWithError,
    TruncateTrajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step for RK4, initial step for RKF45.
    pub step: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
    pub domain_guard: DomainGuard,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Rk4Fixed,
            step: 1e-3,
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            max_steps: 10_000_000,
            domain_guard: DomainGuard::StopWithError,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        IntegratorConfig {
            step,
            ..Default::default()
        }
    }

    pub fn rkf45(abs_tol: f64, rel_tol: f64) -> Self {
        IntegratorConfig {
            method: Method::Rkf45Adaptive,
            abs_tol,
            rel_tol,
            ..Default::default()
        }
    }

    pub fn truncating(mut self) -> Self {
        self.domain_guard = DomainGuard::TruncateTrajectory;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidConfig(format!("step {} must be > 0", self.step)));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be > 0".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be > 0".into()));
        }
        Ok(())
    }

    /// Nominal accuracy used by consistency checks.
    pub fn tolerance(&self) -> f64 {
        self.abs_tol.max(self.rel_tol)
    }
}

/// How an integration ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    /// The flow left the domain just after parameter `at`.
    DomainExit { at: f64 },
}

/// Raw integrator output: independent variable and state at every
/// accepted step, including the start.
#[derive(Debug, Clone)]
pub struct Solution {
    pub xs: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
    pub termination: Termination,
}

/// Integrates `y' = rhs(x, y)` from `x0` to `x_end >= x0`.
///
/// `admissible` is evaluated on every accepted state; a failing state
/// triggers the configured domain guard. Non-finite states always count as
/// inadmissible.
pub fn solve_ode<F, A>(
    mut rhs: F,
    mut admissible: A,
    x0: f64,
    y0: &[f64],
    x_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Solution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    A: FnMut(&[f64]) -> bool,
{
    cfg.validate()?;
    if !(x0.is_finite() && x_end.is_finite()) || x_end < x0 {
        return Err(Error::InvalidConfig(format!("span [{x0}, {x_end}] must be finite and ordered")));
    }
    let mut ok = |y: &[f64]| y.iter().all(|v| v.is_finite()) && admissible(y);
    if !ok(y0) {
        return Err(Error::DomainExit { param: x0 });
    }
    match cfg.method {
        Method::Rk4Fixed => rk4(&mut rhs, &mut ok, x0, y0, x_end, cfg),
        Method::Rkf45Adaptive => rkf45(&mut rhs, &mut ok, x0, y0, x_end, cfg),
    }
}

fn exit(cfg: &IntegratorConfig, xs: Vec<f64>, ys: Vec<Vec<f64>>) -> Result<Solution> {
    let at = *xs.last().expect("at least the initial sample");
    match cfg.domain_guard {
        DomainGuard::StopWithError => Err(Error::DomainExit { param: at }),
        DomainGuard::TruncateTrajectory => {
            log::debug!("trajectory truncated at domain exit, parameter {at}");
            Ok(Solution {
                xs,
                ys,
                termination: Termination::DomainExit { at },
            })
        }
    }
}

fn axpy(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..out.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

fn rk4<F, A>(
    rhs: &mut F,
    ok: &mut A,
    x0: f64,
    y0: &[f64],
    x_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Solution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    A: FnMut(&[f64]) -> bool,
{
    let span = x_end - x0;
    // uniform grid, step <= cfg.step
    let n = if span == 0.0 {
        0
    } else {
        (span / cfg.step - 1e-9).ceil().max(1.0) as usize
    };
    if n > cfg.max_steps {
        return Err(Error::StepLimit(cfg.max_steps));
    }
    let d = y0.len();
    let mut xs = Vec::with_capacity(n + 1);
    let mut ys = Vec::with_capacity(n + 1);
    xs.push(x0);
    ys.push(y0.to_vec());
    if n == 0 {
        return Ok(Solution {
            xs,
            ys,
            termination: Termination::Completed,
        });
    }
    let h = span / n as f64;
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut tmp = vec![0.0; d];
    let mut y = y0.to_vec();
    for step in 0..n {
        let x = x0 + step as f64 * h;
        rhs(x, &y, &mut k1);
        axpy(&mut tmp, &y, 0.5 * h, &[(1.0, &k1)]);
        rhs(x + 0.5 * h, &tmp, &mut k2);
        axpy(&mut tmp, &y, 0.5 * h, &[(1.0, &k2)]);
        rhs(x + 0.5 * h, &tmp, &mut k3);
        axpy(&mut tmp, &y, h, &[(1.0, &k3)]);
        rhs(x + h, &tmp, &mut k4);
        let mut next = vec![0.0; d];
        axpy(
            &mut next,
            &y,
            h / 6.0,
            &[(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)],
        );
        if !ok(&next) {
            return exit(cfg, xs, ys);
        }
        y.copy_from_slice(&next);
        xs.push(if step + 1 == n { x_end } else { x0 + (step + 1) as f64 * h });
        ys.push(next);
    }
    Ok(Solution {
        xs,
        ys,
        termination: Termination::Completed,
    })
}

// Fehlberg coefficients
const C: [f64; 6] = [0.0, 0.25, 0.375, 12.0 / 13.0, 1.0, 0.5];
const A2: [f64; 1] = [0.25];
const A3: [f64; 2] = [3.0 / 32.0, 9.0 / 32.0];
const A4: [f64; 3] = [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0];
const A5: [f64; 4] = [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0];
const A6: [f64; 5] = [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0];
const B5: [f64; 6] = [16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0];
const B4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0];

fn rkf45<F, A>(
    rhs: &mut F,
    ok: &mut A,
    x0: f64,
    y0: &[f64],
    x_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Solution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    A: FnMut(&[f64]) -> bool,
{
    let d = y0.len();
    let mut xs = vec![x0];
    let mut ys = vec![y0.to_vec()];
    let mut x = x0;
    let mut y = y0.to_vec();
    let mut h = cfg.step.min(x_end - x0);
    let mut k = vec![vec![0.0; d]; 6];
    let mut tmp = vec![0.0; d];
    let mut y5 = vec![0.0; d];
    let mut attempts = 0usize;
    while x < x_end {
        attempts += 1;
        if attempts > cfg.max_steps {
            return Err(Error::StepLimit(cfg.max_steps));
        }
        let h_min = 1e-14 * x.abs().max(1.0);
        if x_end - x <= h_min {
            // snap onto the endpoint
            *xs.last_mut().unwrap() = x_end;
            break;
        }
        h = h.min(x_end - x);
        rhs(x, &y, &mut k[0]);
        let rows: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
        for (stage, row) in rows.iter().enumerate() {
            let terms: Vec<(f64, &[f64])> = row
                .iter()
                .zip(&k[..=stage])
                .map(|(c, kv)| (*c, kv.as_slice()))
                .collect();
            axpy(&mut tmp, &y, h, &terms);
            let (head, tail) = k.split_at_mut(stage + 1);
            let _ = head;
            rhs(x + C[stage + 1] * h, &tmp, &mut tail[0]);
        }
        let mut err: f64 = 0.0;
        for i in 0..d {
            let mut hi = 0.0;
            let mut lo = 0.0;
            for s in 0..6 {
                hi += B5[s] * k[s][i];
                lo += B4[s] * k[s][i];
            }
            y5[i] = y[i] + h * hi;
            let scale = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y5[i].abs());
            err = err.max((h * (hi - lo)).abs() / scale);
        }
        if !err.is_finite() || !ok(&y5) {
            h *= 0.25;
            if h < h_min {
                return exit(cfg, xs, ys);
            }
            continue;
        }
        if err <= 1.0 {
            x = if x_end - (x + h) <= h_min { x_end } else { x + h };
            y.copy_from_slice(&y5);
            xs.push(x);
            ys.push(y.clone());
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < h_min {
            return exit(cfg, xs, ys);
        }
    }
    Ok(Solution {
        xs,
        ys,
        termination: Termination::Completed,
    })
}
