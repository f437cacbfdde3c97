use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "igflow", version, about = "Gradient, geodesic and natural flows on dually flat manifolds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a flow and write its trajectory.
    Simulate(Box<SimulateArgs>),
    /// Run the invariant suite and stream JSON-lines reports.
    Verify(VerifyArgs),
    /// Print both coordinate charts, potentials and indices at a point.
    Convert(ConvertArgs),
    /// List the built-in models.
    Models,
}

#[derive(Debug, Args, Default)]
pub struct PointArgs {
    /// Gaussian mean.
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    /// Gaussian variance.
    #[arg(long, allow_negative_numbers = true)]
    pub sigma2: Option<f64>,
    /// Gamma rate.
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// Gamma shape.
    #[arg(long, allow_negative_numbers = true)]
    pub nu: Option<f64>,
    /// Expectation coordinates, comma separated.
    #[arg(long, allow_hyphen_values = true, value_name = "LIST")]
    pub eta: Option<String>,
    /// Natural coordinates, comma separated.
    #[arg(long, allow_hyphen_values = true, value_name = "LIST")]
    pub theta: Option<String>,
    /// Named parameters, e.g. `beta=1,nu=2`.
    #[arg(long, allow_hyphen_values = true, value_name = "K=V,...")]
    pub params: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct IntegratorArgs {
    /// `rk4` (fixed step) or `rkf45` (adaptive).
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// `stop` or `truncate` when the state leaves the domain.
    #[arg(long)]
    pub domain_guard: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// key=value file with [run], [initial], [integrator] and [output] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `gaussian`, `gamma`, `finite:<path>` or `optics`.
    #[arg(long)]
    pub model: Option<String>,
    /// gradient_eta, gradient_theta, geodesic, natural, ray or replicator.
    #[arg(long)]
    pub flow: Option<String>,
    #[command(flatten)]
    pub point: PointArgs,
    /// Ray position.
    #[arg(long, allow_hyphen_values = true, value_name = "LIST")]
    pub q: Option<String>,
    /// Ray momentum.
    #[arg(long, allow_hyphen_values = true, value_name = "LIST")]
    pub p: Option<String>,
    /// Ray launch direction; the momentum is scaled to |p| = n(q).
    #[arg(long, allow_hyphen_values = true, value_name = "LIST")]
    pub dir: Option<String>,
    /// JSON medium description for ray flows.
    #[arg(long)]
    pub medium: Option<PathBuf>,
    /// Span in time t, as `a:b`.
    #[arg(long = "t", allow_hyphen_values = true, value_name = "A:B", conflicts_with_all = ["s", "tau"])]
    pub t: Option<String>,
    /// Span in arc length s, as `a:b`.
    #[arg(long = "s", allow_hyphen_values = true, value_name = "A:B", conflicts_with = "tau")]
    pub s: Option<String>,
    /// Span in the geodesic parameter tau, as `a:b`.
    #[arg(long = "tau", allow_hyphen_values = true, value_name = "A:B")]
    pub tau: Option<String>,
    #[command(flatten)]
    pub integrator: IntegratorArgs,
    /// Output path; the trajectory goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `csv` or `json`; defaults to the output extension, else csv.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub model: String,
    /// Defaults to $IGFLOW_SEED, else 1.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub integrator: IntegratorArgs,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub model: String,
    #[command(flatten)]
    pub point: PointArgs,
}
