use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};

use igflow_core::dynamics::{
    geodesic_flow, gradient_flow, hamiltonian_value, natural_flow_t, FlowStart, HamiltonianSpec, Param,
    PhaseState, RayState, Termination, Trajectory,
};
use igflow_core::io::{format_list, format_number, render, write_trajectory};
use igflow_core::manifold::{dual_pair, Chart, CoordVector, DuallyFlat};
use igflow_core::models::{model_by_id, refractive_index, FiniteExpFamily, GammaParams, GaussianParams, BUILTIN_MODELS};
use igflow_core::optics::{ray_conservation_check, ray_trace, Medium};
use igflow_core::replicator::simulate_replicator;
use igflow_core::verify::run_suite;
use serde::Serialize;

use crate::args::{ConvertArgs, SimulateArgs, VerifyArgs};
use crate::config::{integrator_from_flags, parse_list, parse_real, point_map, Flow, RunConfig};
use crate::CliError;

pub const SEED_ENV: &str = "IGFLOW_SEED";
pub const DEFAULT_SEED: u64 = 1;

fn keys(initial: &BTreeMap<String, String>) -> Vec<&str> {
    initial.keys().map(String::as_str).collect()
}

/// The start point named by `initial`, in whichever chart it was given.
fn resolve_point(model: &dyn DuallyFlat, initial: &BTreeMap<String, String>) -> Result<CoordVector, CliError> {
    let id = model.id();
    let get = |k: &str| parse_real(k, &initial[k]);
    let x = match (id.as_str(), keys(initial).as_slice()) {
        (_, ["eta"]) => CoordVector {
            chart: Chart::Eta,
            values: parse_list("eta", &initial["eta"])?,
        },
        (_, ["theta"]) => CoordVector {
            chart: Chart::Theta,
            values: parse_list("theta", &initial["theta"])?,
        },
        ("gaussian", ["mu", "sigma2"]) => CoordVector {
            chart: Chart::Eta,
            values: GaussianParams::new(get("mu")?, get("sigma2")?)?.eta(),
        },
        ("gamma", ["beta", "nu"]) => CoordVector {
            chart: Chart::Eta,
            values: GammaParams::new(get("beta")?, get("nu")?)?.eta(),
        },
        (_, given) => {
            let expected = match id.as_str() {
                "gaussian" => "mu,sigma2 | eta | theta",
                "gamma" => "beta,nu | eta | theta",
                _ => "eta | theta",
            };
            return Err(CliError::config(format!(
                "initial values [{}] do not match model `{id}` (expected {expected})",
                given.join(",")
            )));
        }
    };
    if x.values.len() != model.dim() {
        return Err(igflow_core::Error::Dimension {
            expected: model.dim(),
            got: x.values.len(),
        }
        .into());
    }
    model.check(&x)?;
    Ok(x)
}

fn in_chart(model: &dyn DuallyFlat, x: &CoordVector, chart: Chart) -> Result<CoordVector, CliError> {
    let (theta, eta) = dual_pair(model, x)?;
    Ok(match chart {
        Chart::Theta => CoordVector { chart, values: theta },
        Chart::Eta => CoordVector { chart, values: eta },
    })
}

fn require_param(flow: Flow, param: Param) -> Result<(), CliError> {
    match flow.native_param() {
        Some(native) if native != param => Err(CliError::config(format!(
            "flow {flow} is integrated in {native}; give the span with --{native}"
        ))),
        _ => Ok(()),
    }
}

struct Outcome {
    samples: usize,
    final_row: String,
    termination: Termination,
    drift_label: &'static str,
    drift: f64,
}

fn describe<S: PhaseState>(traj: &Trajectory<S>) -> String {
    let last = traj.last();
    let mut values = vec![last.t, last.s, last.tau];
    values.extend(last.state.to_flat());
    traj.column_names()
        .iter()
        .zip(values)
        .map(|(c, v)| format!("{c}={}", format_number(v)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn emit<S: PhaseState + Serialize>(traj: &Trajectory<S>, cfg: &RunConfig) -> Result<(), CliError> {
    match &cfg.out {
        Some(path) => write_trajectory(traj, path, cfg.format)?,
        None => {
            let text = render(traj, cfg.format)?;
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(CliError::io)?;
            if !text.ends_with('\n') {
                out.write_all(b"\n").map_err(CliError::io)?;
            }
        }
    }
    Ok(())
}

fn outcome<S: PhaseState>(traj: &Trajectory<S>, drift_label: &'static str, drift: f64) -> Outcome {
    Outcome {
        samples: traj.len(),
        final_row: describe(traj),
        termination: traj.termination,
        drift_label,
        drift,
    }
}

fn max_of(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, f64::max)
}

fn run_ig(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = model_by_id(&cfg.model)?;
    let model = model.as_ref();
    let x = resolve_point(model, &cfg.initial)?;
    let icfg = &cfg.integrator;
    let (traj, label, drift) = match cfg.flow {
        Flow::GradientEta => {
            let traj = gradient_flow(model, &in_chart(model, &x, Chart::Eta)?, cfg.span, icfg)?;
            let (t0, th0) = (traj.first().t, traj.first().state.theta.clone());
            let drift = max_of(traj.samples.iter().flat_map(|s| {
                let decay = (t0 - s.t).exp();
                s.state.theta.iter().zip(&th0).map(move |(a, b)| (a - b * decay).abs())
            }));
            (traj, "linearization drift |theta - theta0 e^-t|", drift)
        }
        Flow::GradientTheta => {
            let traj = gradient_flow(model, &in_chart(model, &x, Chart::Theta)?, cfg.span, icfg)?;
            let (t0, e0) = (traj.first().t, traj.first().state.eta.clone());
            let drift = max_of(traj.samples.iter().flat_map(|s| {
                let growth = (s.t - t0).exp();
                s.state.eta.iter().zip(&e0).map(move |(a, b)| (a - b * growth).abs())
            }));
            (traj, "linearization drift |eta - eta0 e^t|", drift)
        }
        Flow::Geodesic | Flow::Natural => {
            let (spec, label) = if cfg.flow == Flow::Geodesic {
                (HamiltonianSpec::geodesic_eta(), "relative Hamiltonian drift")
            } else {
                (HamiltonianSpec::natural_ig(), "Hamiltonian drift")
            };
            let start = FlowStart::Consistent(x);
            let traj = if spec.is_geodesic() {
                geodesic_flow(model, &spec, &start, cfg.span, icfg)?
            } else {
                natural_flow_t(model, &spec, &start, cfg.span, icfg)?
            };
            let h0 = hamiltonian_value(model, &spec, &traj.first().state)?;
            let scale = if spec.is_geodesic() { h0.abs() } else { 1.0 };
            let mut drift: f64 = 0.0;
            for s in &traj.samples {
                drift = drift.max((hamiltonian_value(model, &spec, &s.state)? - h0).abs() / scale);
            }
            (traj, label, drift)
        }
        _ => unreachable!("non-IG flow routed to run_ig"),
    };
    emit(&traj, cfg)?;
    Ok(outcome(&traj, label, drift))
}

fn run_ray(cfg: &RunConfig) -> Result<Outcome, CliError> {
    if cfg.model != "optics" {
        return Err(CliError::config(format!("ray flows use model `optics`, not `{}`", cfg.model)));
    }
    let path = cfg
        .medium
        .as_ref()
        .ok_or_else(|| CliError::config("ray flows need --medium <json file>"))?;
    let medium = Medium::from_path(path)?;
    let q = cfg
        .initial
        .get("q")
        .ok_or_else(|| CliError::config("ray flows need --q"))
        .and_then(|v| parse_list("q", v))?;
    let state = match (cfg.initial.get("p"), cfg.initial.get("dir")) {
        (Some(p), None) => RayState::new(q, parse_list("p", p)?)?,
        (None, Some(d)) => RayState::launch(&medium, q, &parse_list("dir", d)?)?,
        _ => return Err(CliError::config("ray flows need exactly one of --p or --dir")),
    };
    let extra: Vec<&str> = keys(&cfg.initial)
        .into_iter()
        .filter(|k| !matches!(*k, "q" | "p" | "dir"))
        .collect();
    if !extra.is_empty() {
        return Err(CliError::config(format!(
            "initial values [{}] do not apply to ray flows (expected q and p or dir)",
            extra.join(",")
        )));
    }
    let traj = ray_trace(&medium, &state, cfg.param, cfg.span, &cfg.integrator)?;
    emit(&traj, cfg)?;
    let (_, energy) = ray_conservation_check(&traj, &medium);
    Ok(outcome(&traj, "max |H|", energy))
}

fn run_replicator(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let path = cfg.model.strip_prefix("finite:").ok_or_else(|| {
        CliError::config(format!("replicator flows need a finite:<path> model, not `{}`", cfg.model))
    })?;
    let family = FiniteExpFamily::from_path(path)?;
    let x = resolve_point(&family, &cfg.initial)?;
    let theta0 = in_chart(&family, &x, Chart::Theta)?.values;
    let run = simulate_replicator(&family, &theta0, cfg.span, &cfg.integrator)?;
    emit(&run.closed_form, cfg)?;
    Ok(outcome(&run.closed_form, "route difference", run.route_difference()))
}

pub fn simulate(args: &SimulateArgs) -> Result<u8, CliError> {
    let cfg = RunConfig::resolve(args)?;
    require_param(cfg.flow, cfg.param)?;
    let out = match cfg.flow {
        Flow::Ray => run_ray(&cfg)?,
        Flow::Replicator => run_replicator(&cfg)?,
        _ => run_ig(&cfg)?,
    };
    let mut line = format!(
        "{} on {}: {} samples; final {}; {} = {}",
        cfg.flow,
        cfg.model,
        out.samples,
        out.final_row,
        out.drift_label,
        format_number(out.drift)
    );
    let code = match out.termination {
        Termination::Completed => 0,
        Termination::DomainExit { at } => {
            line.push_str(&format!("; left the domain at {} = {}", cfg.param, format_number(at)));
            3
        }
    };
    if cfg.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
    Ok(code)
}

fn seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::config(format!("{SEED_ENV} must be a non-negative integer, got `{v}`"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

pub fn verify(args: &VerifyArgs) -> Result<u8, CliError> {
    let seed = seed(args.seed)?;
    let cfg = integrator_from_flags(Default::default(), &args.integrator)?;
    let reports = run_suite(&args.model, seed, &cfg)?;
    let mut sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(CliError::io)?)),
        None => Box::new(io::stdout().lock()),
    };
    for r in &reports {
        writeln!(sink, "{}", r.to_json_line()).map_err(CliError::io)?;
    }
    sink.flush().map_err(CliError::io)?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.check_id.as_str()).collect();
    let mut summary = format!(
        "verify {} seed {seed}: {}/{} checks passed",
        args.model,
        reports.len() - failed.len(),
        reports.len()
    );
    if !failed.is_empty() {
        summary.push_str(&format!("; failed: {}", failed.join(", ")));
    }
    eprintln!("{summary}");
    Ok(if failed.is_empty() { 0 } else { 1 })
}

pub fn convert(args: &ConvertArgs) -> Result<u8, CliError> {
    let model = model_by_id(&args.model)?;
    let model = model.as_ref();
    let x = resolve_point(model, &point_map(&args.point)?)?;
    let (theta, eta) = dual_pair(model, &x)?;
    let n = refractive_index(model, &CoordVector { chart: Chart::Eta, values: eta.clone() })?;
    let n_star = refractive_index(model, &CoordVector { chart: Chart::Theta, values: theta.clone() })?;
    println!("theta = {}", format_list(&theta));
    println!("eta = {}", format_list(&eta));
    println!("psi = {}", format_number(model.psi(&theta)));
    println!("psi_star = {}", format_number(model.psi_star(&eta)));
    println!("n = {}", format_number(n));
    println!("n_star = {}", format_number(n_star));
    Ok(0)
}

pub fn models() -> Result<u8, CliError> {
    let rows = [
        (BUILTIN_MODELS[0], "normal family; theta = (mu/sigma2, -1/(2 sigma2)), eta = (mu, mu^2 + sigma2)"),
        (BUILTIN_MODELS[1], "gamma family; theta = (-beta, nu - 1), eta = (nu/beta, digamma(nu) - ln beta)"),
        ("finite:<path>", "finite-alphabet exponential family from a JSON file {\"stats\": [[...], ...]}"),
        ("optics", "ray tracing in a medium given by --medium (simulate --flow ray)"),
    ];
    for (id, text) in rows {
        println!("{id:<14} {text}");
    }
    Ok(0)
}
