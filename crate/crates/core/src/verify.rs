//! Seeded invariant suite producing machine-readable check reports.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    dual_consistency_residual, geodesic_flow, gradient_flow, hamiltonian_value, integrability_products,
    jm_transform, linear_flow, natural_flow_t, reparametrize_ig, FlowStart, HamiltonianSpec, IgNatural,
    IntegratorConfig, Param, Trajectory,
};
use crate::error::{Error, Result};
use crate::manifold::{
    coord_map, fd_gradient, fd_gradient_check, legendre_residual, mat_vec, metric_duality_residual, quad, Chart, CoordVector,
    DuallyFlat,
};
use crate::models::{gamma_index, model_by_id, GammaParams, GaussianParams};

/// Tolerances used by the suite.
pub mod tol {
    pub const ROUNDTRIP: f64 = 1e-10;
    pub const LEGENDRE: f64 = 1e-9;
    pub const DUALITY: f64 = 1e-9;
    pub const FD_GRADIENT: f64 = 1e-7;
    pub const FD_STEP: f64 = 1e-5;
    pub const INDEX_CLOSED_FORM: f64 = 1e-12;
    pub const INDEX_IDENTITY: f64 = 1e-9;
    pub const LINEARIZATION: f64 = 1e-6;
    pub const RATE_LAW: f64 = 1e-6;
    pub const CONSERVATION: f64 = 1e-8;
    pub const PATH_EQUIVALENCE: f64 = 1e-6;
    pub const TIME_MAP: f64 = 1e-7;
    pub const SECOND_SET: f64 = 1e-6;
    pub const EXIT_TIME: f64 = 1e-3;
    pub const JM_METRIC: f64 = 1e-12;
    pub const INTEGRABILITY: f64 = 1e-9;
    /// Consistency is checked against this multiple of the integrator tolerance.
    pub const CONSISTENCY_FACTOR: f64 = 10.0;
}

/// Seeded domain points drawn per structural check.
pub const STRUCTURAL_POINTS: usize = 100;
/// Seeded starts per flow check.
pub const FLOW_POINTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_id: String,
    pub model: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub details: String,
}

impl CheckReport {
    pub fn new(check_id: &str, model: &str, residual: f64, tolerance: f64, details: String) -> Self {
        CheckReport {
            check_id: check_id.to_string(),
            model: model.to_string(),
            residual,
            tolerance,
            pass: residual <= tolerance,
            details,
        }
    }

    fn failed(check_id: &str, model: &str, tolerance: f64, err: &Error) -> Self {
        CheckReport {
            check_id: check_id.to_string(),
            model: model.to_string(),
            residual: f64::INFINITY,
            tolerance,
            pass: false,
            details: format!("error: {err}"),
        }
    }

    /// One JSON object on a single line.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("reports always serialize")
    }
}

/// A random point of the model's well-conditioned region, in the eta-chart.
pub fn sample_point(model: &dyn DuallyFlat, rng: &mut impl Rng) -> CoordVector {
    let eta = match model.id().as_str() {
        "gaussian" => GaussianParams {
            mu: rng.random_range(-3.0..=3.0),
            sigma2: rng.random_range(0.1..=10.0),
        }
        .eta(),
        "gamma" => GammaParams {
            beta: rng.random_range(0.2..=5.0),
            nu: rng.random_range(0.5..=8.0),
        }
        .eta(),
        _ => {
            let theta: Vec<f64> = (0..model.dim()).map(|_| rng.random_range(-2.0..=2.0)).collect();
            model.eta_of_theta(&theta)
        }
    };
    CoordVector {
        chart: Chart::Eta,
        values: eta,
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m: f64, (x, y)| m.max((x - y).abs()))
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

type Outcome = Result<(f64, String)>;

const CHECKS: &[(&str, f64)] = &[
    ("consistency", f64::NAN),
    ("fd_gradient_eta", tol::FD_GRADIENT),
    ("fd_gradient_theta", tol::FD_GRADIENT),
    ("geodesic_conservation", tol::CONSERVATION),
    ("index_closed_form", tol::INDEX_CLOSED_FORM),
    ("index_identity", tol::INDEX_IDENTITY),
    ("integrability", tol::INTEGRABILITY),
    ("jm_metric", tol::JM_METRIC),
    ("legendre", tol::LEGENDRE),
    ("linearization_eta", tol::LINEARIZATION),
    ("linearization_theta", tol::LINEARIZATION),
    ("metric_duality", tol::DUALITY),
    ("path_equivalence", tol::PATH_EQUIVALENCE),
    ("rate_law", tol::RATE_LAW),
    ("roundtrip", tol::ROUNDTRIP),
    ("second_set_exit_time", tol::EXIT_TIME),
    ("second_set_gaussian", tol::SECOND_SET),
    ("time_map_eta", tol::TIME_MAP),
    ("time_map_theta", tol::TIME_MAP),
];

fn applies(id: &str, model: &str) -> bool {
    match id {
        "index_closed_form" | "time_map_eta" => matches!(model, "gaussian" | "gamma"),
        "time_map_theta" | "second_set_gaussian" | "second_set_exit_time" => model == "gaussian",
        _ => true,
    }
}

/// Runs the suite on a built-in or file-backed model id.
pub fn run_suite(model_id: &str, seed: u64, cfg: &IntegratorConfig) -> Result<Vec<CheckReport>> {
    let model = model_by_id(model_id)?;
    run_suite_on(model.as_ref(), seed, cfg)
}

/// Runs the suite on an arbitrary model object. Checks run in parallel,
/// each with its own random stream; reports come back sorted by id.
pub fn run_suite_on(model: &dyn DuallyFlat, seed: u64, cfg: &IntegratorConfig) -> Result<Vec<CheckReport>> {
    cfg.validate()?;
    let id = model.id();
    let mut reports: Vec<CheckReport> = CHECKS
        .par_iter()
        .enumerate()
        .filter(|(_, (check, _))| applies(check, &id))
        .map(|(stream, (check, tolerance))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream as u64);
            let tolerance = if check == &"consistency" {
                tol::CONSISTENCY_FACTOR * cfg.tolerance()
            } else {
                *tolerance
            };
            match run_check(check, model, &mut rng, cfg) {
                Ok((residual, details)) => CheckReport::new(check, &id, residual, tolerance, details),
                Err(e) => CheckReport::failed(check, &id, tolerance, &e),
            }
        })
        .collect();
    reports.sort_by(|a, b| a.check_id.cmp(&b.check_id));
    Ok(reports)
}

fn points(model: &dyn DuallyFlat, rng: &mut ChaCha8Rng, n: usize) -> Vec<CoordVector> {
    (0..n).map(|_| sample_point(model, rng)).collect()
}

fn to_theta(model: &dyn DuallyFlat, x: &CoordVector) -> CoordVector {
    CoordVector {
        chart: Chart::Theta,
        values: model.theta_of_eta(&x.values),
    }
}

fn run_check(id: &str, model: &dyn DuallyFlat, rng: &mut ChaCha8Rng, cfg: &IntegratorConfig) -> Outcome {
    match id {
        "roundtrip" => check_roundtrip(model, rng),
        "legendre" => structural(model, rng, |m, x| legendre_residual(m, &to_theta(m, x))),
        "metric_duality" => structural(model, rng, |m, x| metric_duality_residual(m, x)),
        "fd_gradient_eta" => check_fd_gradient(model, rng, Chart::Eta),
        "fd_gradient_theta" => check_fd_gradient(model, rng, Chart::Theta),
        "index_identity" => structural(model, rng, index_identity),
        "index_closed_form" => check_index_closed_form(model, rng),
        "jm_metric" => structural(model, rng, jm_metric_residual),
        "linearization_eta" => check_linearization_eta(model, rng, cfg),
        "linearization_theta" => check_linearization_theta(model, rng, cfg),
        "rate_law" => check_rate_law(model, rng, cfg),
        "geodesic_conservation" => check_conservation(model, rng, cfg),
        "path_equivalence" => check_path_equivalence(model, rng, cfg),
        "consistency" => check_consistency(model, rng, cfg),
        "time_map_eta" => check_time_map(model, rng, cfg, Chart::Eta),
        "time_map_theta" => check_time_map(model, rng, cfg, Chart::Theta),
        "second_set_gaussian" => {
            let traj = second_set_trajectory(model, cfg, 5f64.ln() / 2.0)?;
            let r = second_set_gaussian_check(&traj)?;
            Ok((r.residual, r.details))
        }
        "second_set_exit_time" => check_exit_time(model),
        "integrability" => check_integrability(model, rng, cfg),
        other => Err(Error::InvalidConfig(format!("unknown check `{other}`"))),
    }
}

fn structural<F>(model: &dyn DuallyFlat, rng: &mut ChaCha8Rng, f: F) -> Outcome
where
    F: Fn(&dyn DuallyFlat, &CoordVector) -> Result<f64>,
{
    let mut worst: f64 = 0.0;
    let mut at = Vec::new();
    for x in points(model, rng, STRUCTURAL_POINTS) {
        let r = f(model, &x)?;
        if !(r <= worst) {
            worst = if r.is_nan() { f64::NAN } else { r };
            at = x.values.clone();
        }
        if worst.is_nan() {
            break;
        }
    }
    Ok((worst, format!("max over {STRUCTURAL_POINTS} points, worst at eta = {at:?}")))
}

fn check_fd_gradient(model: &dyn DuallyFlat, rng: &mut ChaCha8Rng, chart: Chart) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut scaled: f64 = 0.0;
    let mut at = Vec::new();
    for x in points(model, rng, STRUCTURAL_POINTS) {
        let x = match chart {
            Chart::Eta => x,
            Chart::Theta => to_theta(model, &x),
        };
        let err = fd_gradient_check(model, &x, tol::FD_STEP)?;
        let fd = fd_gradient(model, &x, tol::FD_STEP)?;
        let analytic = coord_map(model, &x)?.values;
        for (a, b) in fd.iter().zip(&analytic) {
            scaled = scaled.max((a - b).abs() / b.abs().max(1.0));
        }
        if err > worst {
            worst = err;
            at = x.values.clone();
        }
    }
    Ok((
        worst,
        format!(
            "absolute error at h = {:e}, worst at {chart} = {at:?}; error scaled by max(1, |component|) = {scaled:e}",
            tol::FD_STEP
        ),
    ))
}

fn check_roundtrip(model: &dyn DuallyFlat, rng: &mut ChaCha8Rng) -> Outcome {
    let mut worst: f64 = 0.0;
    for x in points(model, rng, STRUCTURAL_POINTS) {
        let theta = model.theta_of_eta(&x.values);
        worst = nan_max(worst, max_abs_diff(&model.eta_of_theta(&theta), &x.values));
        let back = model.theta_of_eta(&model.eta_of_theta(&theta));
        worst = nan_max(worst, max_abs_diff(&back, &theta));
    }
    Ok((worst, format!("eta and theta round trips at {STRUCTURAL_POINTS} points")))
}

/// `|n^2(eta) - g^ij (d eta/dt)_i (d eta/dt)_j| / n^2` with `d eta/dt = -g theta`.
fn index_identity(model: &dyn DuallyFlat, x: &CoordVector) -> Result<f64> {
    let theta = model.theta_of_eta(&x.values);
    let g = model.metric_lower_eta(&x.values);
    let n2 = quad(&g, &theta, &theta);
    let v = mat_vec(&g, &theta);
    let rhs = quad(&model.metric_upper_theta(&theta), &v, &v);
    Ok((n2 - rhs).abs() / n2.max(f64::MIN_POSITIVE))
}

fn check_index_closed_form(model: &dyn DuallyFlat, rng: &mut ChaCha8Rng) -> Outcome {
    let id = model.id();
    structural(model, rng, |m, x| {
        let theta = m.theta_of_eta(&x.values);
        let n = quad(&m.metric_lower_eta(&x.values), &theta, &theta).sqrt();
        let n_star = {
            let th = to_theta(m, x);
            quad(&m.metric_upper_theta(&th.values), &x.values, &x.values).sqrt()
        };
        Ok(match id.as_str() {
            "gaussian" => {
                let p = GaussianParams::from_eta(&x.values);
                (n - FRAC_1_SQRT_2).abs().max((n_star - p.theta_chart_index()).abs() / p.theta_chart_index())
            }
            _ => {
                // n depends on nu only: compare against a different beta too
                let p = GammaParams::from_eta(&x.values);
                let shifted = GammaParams { beta: 2.0 * p.beta, nu: p.nu };
                let eta2 = shifted.eta();
                let th2 = shifted.theta();
                let n2 = quad(&m.metric_lower_eta(&eta2), &th2, &th2).sqrt();
                (n - gamma_index(p.nu)).abs().max((n2 - n).abs())
            }
        })
    })
    .map(|(r, d)| (r, format!("closed-form n(eta) and n*(theta); {d}")))
}

fn jm_metric_residual(model: &dyn DuallyFlat, x: &CoordVector) -> Result<f64> {
    let natural = IgNatural { model };
    let jm = jm_transform(&natural, 0.0);
    let upper = jm.metric_upper(&x.values)?;
    if model.id() == "gaussian" {
        // n_G^2 = 1/2, so the JM metric is 2 g
        let g = model.metric_lower_eta(&x.values);
        let scale = g.amax();
        return Ok((upper - g * 2.0).amax() / scale);
    }
    let theta = model.theta_of_eta(&x.values);
    Ok((quad(&upper, &theta, &theta) - 1.0).abs())
}

fn flow_starts(model: &dyn DuallyFlat, rng: &mut ChaCha8Rng) -> Vec<CoordVector> {
    points(model, rng, FLOW_POINTS)
}

fn check_linearization_eta(model: &dyn DuallyFlat, rng: &mut ChaCha8Rng, cfg: &IntegratorConfig) -> Outcome {
    let mut worst: f64 = 0.0;
    for x in flow_starts(model, rng) {
        let traj = gradient_flow(model, &x, (0.0, 2.0), cfg)?;
        let th0 = &traj.first().state.theta;
        for s in &traj.samples {
            let expect: Vec<f64> = th0.iter().map(|v| v * (-s.t).exp()).collect();
            worst = nan_max(worst, max_abs_diff(&s.state.theta, &expect));
        }
    }
    Ok((worst, format!("|theta(t) - theta(0) e^-t| over t in [0, 2], {FLOW_POINTS} starts")))
}

/// First `t` at which `eta0 e^t` leaves the domain, or infinity if it stays
/// inside up to `t = 64`.
pub fn theta_flow_exit_time(model: &dyn DuallyFlat, eta0: &[f64]) -> f64 {
    let inside = |t: f64| {
        let eta: Vec<f64> = eta0.iter().map(|v| v * t.exp()).collect();
        model.check_eta(&eta).is_ok()
    };
    let mut lo = 0.0;
    let mut hi = 0.25;
    while inside(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 64.0 {
            return f64::INFINITY;
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Span and config for a theta-chart flow from `eta0`: `min(2, t_exit/2)`
/// with the step capped at a 2000th of the span.
fn theta_flow_plan(model: &dyn DuallyFlat, eta0: &[f64], cfg: &IntegratorConfig) -> (f64, IntegratorConfig) {
    let span = (theta_flow_exit_time(model, eta0) / 2.0).min(2.0);
    let cfg = IntegratorConfig {
        step: cfg.step.min(span / 2000.0),
        ..*cfg
    };
    (span, cfg)
}

fn check_linearization_theta(model: &dyn DuallyFlat, rng: &mut ChaCha8Rng, cfg: &IntegratorConfig) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut spans = Vec::new();
    for x in flow_starts(model, rng) {
        let (span, local) = theta_flow_plan(model, &x.values, cfg);
        spans.push(span);
        let traj = gradient_flow(model, &to_theta(model, &x), (0.0, span), &local)?;
        let eta0 = &traj.first().state.eta;
        for s in &traj.samples {
            let expect: Vec<f64> = eta0.iter().map(|v| v * s.t.exp()).collect();
            worst = nan_max(worst, max_abs_diff(&s.state.eta, &expect));
        }
    }
    Ok((worst, format!("|eta(t) - eta(0) e^t| over spans {spans:?}")))
}

fn check_rate_law(model: &dyn DuallyFlat, rng: &mut ChaCha8Rng, cfg: &IntegratorConfig) -> Outcome {
    let mut worst: f64 = 0.0;
    for x in flow_starts(model, rng) {
        let traj = gradient_flow(model, &x, (0.0, 2.0), cfg)?;
        let psi: Vec<f64> = traj.samples.iter().map(|s| model.psi_star(&s.state.eta)).collect();
        for k in 1..traj.len() - 1 {
            let (a, b) = (&traj.samples[k - 1], &traj.samples[k + 1]);
            let rate = (psi[k + 1] - psi[k - 1]) / (b.t - a.t);
            let s = &traj.samples[k];
            let n2 = quad(&model.metric_lower_eta(&s.state.eta), &s.state.theta, &s.state.theta);
            worst = nan_max(worst, (rate + n2).abs());
        }
    }
    Ok((worst, "|d Psi*/dt + n^2| by central differences along eta-chart flows".into()))
}

/// Total geodesic parameter `tau = int n^2 dt` accumulated by the
/// consistent flow from `eta0`, whose natural coordinates decay as
/// `theta0 e^-t`. Stops early once it passes `cap`.
pub fn geodesic_tau_horizon(model: &dyn DuallyFlat, eta0: &[f64], cap: f64) -> f64 {
    let theta0 = model.theta_of_eta(eta0);
    let n2 = |t: f64| {
        let th: Vec<f64> = theta0.iter().map(|v| v * (-t).exp()).collect();
        quad(&model.metric_lower_eta(&model.eta_of_theta(&th)), &th, &th)
    };
    let h = 0.01;
    let mut tau = 0.0;
    let mut t = 0.0;
    while t < 40.0 && tau <= cap {
        tau += h / 6.0 * (n2(t) + 4.0 * n2(t + 0.5 * h) + n2(t + h));
        t += h;
    }
    tau
}

fn geodesic_runs(
    model: &dyn DuallyFlat,
    rng: &mut ChaCha8Rng,
    cfg: &IntegratorConfig,
) -> Result<Vec<(FlowStart, Trajectory)>> {
    flow_starts(model, rng)
        .into_iter()
        .map(|x| {
            let span = (geodesic_tau_horizon(model, &x.values, 2.0) / 2.0).min(1.0);
            let local = IntegratorConfig {
                step: cfg.step.min(span / 2000.0),
                ..*cfg
            };
            let start = FlowStart::Consistent(x);
            let traj = geodesic_flow(model, &HamiltonianSpec::geodesic_eta(), &start, (0.0, span), &local)?;
            Ok((start, traj))
        })
        .collect()
}

fn check_conservation(model: &dyn DuallyFlat, rng: &mut ChaCha8Rng, cfg: &IntegratorConfig) -> Outcome {
    let spec = HamiltonianSpec::geodesic_eta();
    let mut worst: f64 = 0.0;
    let mut start_dev: f64 = 0.0;
    for (_, traj) in geodesic_runs(model, rng, cfg)? {
        let h0 = hamiltonian_value(model, &spec, &traj.first().state)?;
        start_dev = start_dev.max((h0 - 1.0).abs());
        for s in &traj.samples {
            let h = hamiltonian_value(model, &spec, &s.state)?;
            worst = nan_max(worst, (h - h0).abs() / h0);
        }
    }
    Ok((
        nan_max(worst, start_dev),
        format!("relative drift of the geodesic Hamiltonian over tau in [0, min(1, tau_inf/2)]; max |H(0) - 1| = {start_dev:e}"),
    ))
}

fn check_path_equivalence(model: &dyn DuallyFlat, rng: &mut ChaCha8Rng, cfg: &IntegratorConfig) -> Outcome {
    let mut worst: f64 = 0.0;
    for (start, geo) in geodesic_runs(model, rng, cfg)? {
        let geo_t = reparametrize_ig(&geo, Param::Tau, Param::T, model)?;
        let t_end = geo_t.last().t;
        let nat = natural_flow_t(model, &HamiltonianSpec::natural_ig(), &start, (0.0, t_end), cfg)?;
        for s in &geo_t.samples {
            let other = nat.interpolate(Param::T, s.t.min(nat.last().t))?;
            worst = nan_max(worst, max_abs_diff(&s.state.eta, &other.state.eta));
            worst = nan_max(worst, max_abs_diff(&s.state.theta, &other.state.theta));
        }
    }
    Ok((worst, "geodesic flow in tau vs natural flow in t, compared on a common t-grid".into()))
}

fn check_consistency(model: &dyn DuallyFlat, rng: &mut ChaCha8Rng, cfg: &IntegratorConfig) -> Outcome {
    let mut worst: f64 = 0.0;
    for (start, geo) in geodesic_runs(model, rng, cfg)? {
        worst = nan_max(worst, dual_consistency_residual(model, &geo));
        let nat = natural_flow_t(model, &HamiltonianSpec::natural_ig(), &start, (0.0, 2.0), cfg)?;
        worst = nan_max(worst, dual_consistency_residual(model, &nat));
    }
    Ok((worst, "|eta(theta) - eta| along geodesic and natural flows".into()))
}

fn check_time_map(model: &dyn DuallyFlat, rng: &mut ChaCha8Rng, cfg: &IntegratorConfig, chart: Chart) -> Outcome {
    let mut worst: f64 = 0.0;
    for x in flow_starts(model, rng) {
        let traj = match chart {
            Chart::Eta => gradient_flow(model, &x, (0.0, 2.0), cfg)?,
            Chart::Theta => {
                let (span, local) = theta_flow_plan(model, &x.values, cfg);
                gradient_flow(model, &to_theta(model, &x), (0.0, span), &local)?
            }
        };
        worst = nan_max(worst, time_map_check(&model.id(), &traj)?.residual);
    }
    Ok((worst, format!("closed-form dt relation along {FLOW_POINTS} {chart}-chart flows")))
}

type Invariant = Box<dyn Fn(f64, &[f64]) -> f64>;

/// Checks the model's closed-form `dt` relation along a gradient flow:
/// `t - ln sigma^2` (Gaussian, eta-chart), `t + ln beta` (Gamma, eta-chart)
/// or `t - ln |mu|` (Gaussian, theta-chart) must stay constant.
pub fn time_map_check(model_id: &str, traj: &Trajectory) -> Result<CheckReport> {
    use crate::dynamics::Driver;
    if traj.model != model_id {
        return Err(Error::ModelMismatch(format!(
            "trajectory from `{}` checked as `{model_id}`",
            traj.model
        )));
    }
    let (invariant, what): (Invariant, &str) = match (model_id, traj.driver) {
        ("gaussian", Driver::GradientEta) => (
            Box::new(|t, eta| t - GaussianParams::from_eta(eta).sigma2.ln()),
            "t - ln sigma^2",
        ),
        ("gamma", Driver::GradientEta) => (Box::new(|t, eta| t + GammaParams::from_eta(eta).beta.ln()), "t + ln beta"),
        ("gaussian", Driver::GradientTheta) => {
            let mu0 = traj.first().state.eta[0];
            if mu0 == 0.0 {
                return Err(Error::Domain("dt = d ln mu is undefined at mu = 0".into()));
            }
            (Box::new(|t, eta| t - eta[0].abs().ln()), "t - ln |mu|")
        }
        (id, driver) => {
            return Err(Error::ModelMismatch(format!(
                "no closed-form time map for {id} with a {driver} trajectory"
            )))
        }
    };
    let c0 = invariant(traj.first().t, &traj.first().state.eta);
    let residual = traj
        .samples
        .iter()
        .map(|s| (invariant(s.t, &s.state.eta) - c0).abs())
        .fold(0.0, nan_max);
    Ok(CheckReport::new(
        &format!("time_map_{}", traj.driver),
        model_id,
        residual,
        tol::TIME_MAP,
        format!("{what} constant along {} samples", traj.len()),
    ))
}

/// Reference start of the Gaussian theta-chart example, `(mu, sigma^2) = (1, 4)`.
pub const SECOND_SET_START: (f64, f64) = (1.0, 4.0);

fn second_set_trajectory(model: &dyn DuallyFlat, cfg: &IntegratorConfig, span: f64) -> Result<Trajectory> {
    let (mu, sigma2) = SECOND_SET_START;
    let x0 = CoordVector::theta(GaussianParams::new(mu, sigma2)?.theta())?;
    let local = IntegratorConfig {
        step: cfg.step.min(span / 2000.0),
        ..*cfg
    };
    gradient_flow(model, &x0, (0.0, span), &local)
}

/// Along a Gaussian theta-chart gradient flow, checks `eta(t) = eta(0) e^t`
/// (relative) and `d sigma/sigma = 1/2 (1 - mu^2/sigma^2) d mu/mu` by
/// central differences. The residual is the larger of the two.
pub fn second_set_gaussian_check(traj: &Trajectory) -> Result<CheckReport> {
    use crate::dynamics::Driver;
    if traj.model != "gaussian" || traj.driver != Driver::GradientTheta {
        return Err(Error::ModelMismatch(format!(
            "expected a gaussian gradient_theta trajectory, got {} {}",
            traj.model, traj.driver
        )));
    }
    let eta0 = &traj.first().state.eta;
    if eta0[0] == 0.0 {
        return Err(Error::Domain("dt = d ln mu is undefined at mu = 0".into()));
    }
    let mut growth: f64 = 0.0;
    for s in &traj.samples {
        for (e, e0) in s.state.eta.iter().zip(eta0) {
            let expect = e0 * s.t.exp();
            growth = nan_max(growth, (e - expect).abs() / expect.abs().max(1.0));
        }
    }
    let params: Vec<GaussianParams> = traj.samples.iter().map(|s| GaussianParams::from_eta(&s.state.eta)).collect();
    let mut relation: f64 = 0.0;
    for k in 1..traj.len().saturating_sub(1) {
        let (a, b) = (&params[k - 1], &params[k + 1]);
        let dln_sigma = 0.5 * (b.sigma2.ln() - a.sigma2.ln());
        let dln_mu = (b.mu / a.mu).ln();
        let p = &params[k];
        let rhs = 0.5 * (1.0 - p.mu * p.mu / p.sigma2) * dln_mu;
        let dt = traj.samples[k + 1].t - traj.samples[k - 1].t;
        relation = nan_max(relation, (dln_sigma - rhs).abs() / dt);
    }
    Ok(CheckReport::new(
        "second_set_gaussian",
        "gaussian",
        nan_max(growth, relation),
        tol::SECOND_SET,
        format!("growth law residual {growth:e}, sigma-mu relation residual {relation:e}"),
    ))
}

fn check_exit_time(model: &dyn DuallyFlat) -> Outcome {
    let (mu, sigma2) = SECOND_SET_START;
    let expected = ((mu * mu + sigma2) / (mu * mu)).ln();
    let x0 = CoordVector::theta(GaussianParams::new(mu, sigma2)?.theta())?;
    let cfg = IntegratorConfig::rkf45(1e-10, 1e-10).truncating();
    let traj = gradient_flow(model, &x0, (0.0, 2.0 * expected), &cfg)?;
    let at = match traj.termination {
        crate::dynamics::Termination::DomainExit { at } => at,
        crate::dynamics::Termination::Completed => f64::INFINITY,
    };
    Ok(((at - expected).abs(), format!("domain exit at t = {at}, expected ln 5 = {expected}")))
}

fn check_integrability(model: &dyn DuallyFlat, rng: &mut ChaCha8Rng, cfg: &IntegratorConfig) -> Outcome {
    let x = sample_point(model, rng);
    let theta0 = to_theta(model, &x);
    let th = linear_flow(&theta0, (0.0, 5.0), cfg)?;
    let et = linear_flow(&x, (0.0, 5.0), cfg)?;
    let c = integrability_products(&th, &et)?;
    let worst = c.max_drift().into_iter().fold(0.0, nan_max);
    Ok((worst, "theta^i eta_i along paired linear flows, t in [0, 5]".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Driver;
    use crate::models::{gamma_model, gaussian_model, GammaModel, GaussianModel};

    #[test]
    fn report_pass_flag() {
        assert!(CheckReport::new("x", "m", 1e-10, 1e-9, String::new()).pass);
        assert!(!CheckReport::new("x", "m", 1e-8, 1e-9, String::new()).pass);
        assert!(!CheckReport::new("x", "m", f64::NAN, 1e-9, String::new()).pass);
        let line = CheckReport::new("x", "m", 0.5, 1.0, "d".into()).to_json_line();
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        for key in ["check_id", "model", "residual", "tolerance", "pass", "details"] {
            assert!(v.get(key).is_some());
        }
    }

    #[test]
    fn exit_time_bisection() {
        let eta0 = GaussianParams::new(1.0, 4.0).unwrap().eta();
        let t = theta_flow_exit_time(&gaussian_model(), &eta0);
        assert!((t - 5f64.ln()).abs() < 1e-12);
        let eta0 = GaussianParams::new(0.0, 4.0).unwrap().eta();
        assert!(theta_flow_exit_time(&gaussian_model(), &eta0).is_infinite());
    }

    #[test]
    fn time_map_rejects_mismatch() {
        let x0 = CoordVector::eta(vec![0.0, 1.0]).unwrap();
        let traj = gradient_flow(&gaussian_model(), &x0, (0.0, 0.1), &IntegratorConfig::default()).unwrap();
        assert!(matches!(time_map_check("gamma", &traj), Err(Error::ModelMismatch(_))));
        let r = time_map_check("gaussian", &traj).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.check_id, format!("time_map_{}", Driver::GradientEta));
    }

    #[test]
    fn second_set_mu_zero_is_rejected() {
        let model = gaussian_model();
        let x0 = CoordVector::theta(GaussianParams::new(0.0, 1.0).unwrap().theta()).unwrap();
        let traj = gradient_flow(&model, &x0, (0.0, 0.1), &IntegratorConfig::default()).unwrap();
        assert!(second_set_gaussian_check(&traj).is_err());
        assert!(time_map_check("gaussian", &traj).is_err());
    }

    #[test]
    fn second_set_reference_start() {
        let cfg = IntegratorConfig::default();
        let traj = second_set_trajectory(&gaussian_model(), &cfg, 5f64.ln() / 2.0).unwrap();
        let r = second_set_gaussian_check(&traj).unwrap();
        assert!(r.pass, "{r:?}");
        // eta_2(t) = 5 e^t holds all the way towards the exit
        let traj = second_set_trajectory(&gaussian_model(), &cfg, 1.5).unwrap();
        for s in &traj.samples {
            assert!((s.state.eta[1] - 5.0 * s.t.exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn structural_checks_detect_faults() {
        let cfg = IntegratorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bad = GaussianModel::with_lower_metric_scale(0.5);
        let (r, _) = structural(&bad, &mut rng, |m, x| metric_duality_residual(m, x)).unwrap();
        assert!((r - 0.5).abs() < 1e-9, "{r}");
        let bad = GammaModel::with_trigamma_perturbation(1e-3);
        let (r, _) = structural(&bad, &mut rng, |m, x| metric_duality_residual(m, x)).unwrap();
        assert!(r > 1e-4);
        let _ = cfg;
    }

    #[test]
    fn suite_is_deterministic_and_sorted() {
        let cfg = IntegratorConfig::default();
        let a = run_suite_on(&gamma_model(), 3, &cfg).unwrap();
        let b = run_suite_on(&gamma_model(), 3, &cfg).unwrap();
        assert_eq!(a, b);
        let ids: Vec<&str> = a.iter().map(|r| r.check_id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert!(!ids.contains(&"second_set_gaussian"));
    }

    #[test]
    fn unknown_model() {
        assert!(matches!(
            run_suite("poisson", 1, &IntegratorConfig::default()),
            Err(Error::UnknownModel(_))
        ));
    }
}
