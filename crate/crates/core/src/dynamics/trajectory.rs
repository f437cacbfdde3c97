use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::integrator::{IntegratorConfig, Termination};
use super::interp::Resampler;
use crate::error::{Error, Result};

/// The three flow parameters: gradient-flow time `t`, arc length `s`, and
/// the Jacobi-Maupertuis parameter `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    T,
    S,
    Tau,
}

impl Param {
    pub const ALL: [Param; 3] = [Param::T, Param::S, Param::Tau];

    pub fn name(self) -> &'static str {
        match self {
            Param::T => "t",
            Param::S => "s",
            Param::Tau => "tau",
        }
    }

    /// Power of the index in `d(self) = n^order dt`.
    pub(crate) fn order(self) -> i32 {
        match self {
            Param::T => 0,
            Param::S => 1,
            Param::Tau => 2,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t" => Ok(Param::T),
            "s" => Ok(Param::S),
            "tau" => Ok(Param::Tau),
            other => Err(Error::Parse(format!("unknown parameter `{other}` (expected t, s or tau)"))),
        }
    }
}

/// Which equations produced a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Driver {
    GradientEta,
    GradientTheta,
    GeodesicEta,
    GeodesicTheta,
    NaturalIg,
    RayS,
    RayTau,
    RayT,
    Replicator,
}

impl Driver {
    pub fn name(self) -> &'static str {
        match self {
            Driver::GradientEta => "gradient_eta",
            Driver::GradientTheta => "gradient_theta",
            Driver::GeodesicEta => "geodesic_eta",
            Driver::GeodesicTheta => "geodesic_theta",
            Driver::NaturalIg => "natural_ig",
            Driver::RayS => "ray_s",
            Driver::RayTau => "ray_tau",
            Driver::RayT => "ray_t",
            Driver::Replicator => "replicator",
        }
    }
}

impl fmt::Display for Driver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A phase-space state that can be flattened for integration and
/// interpolation.
pub trait PhaseState: Clone + fmt::Debug {
    fn to_flat(&self) -> Vec<f64>;
    /// Rebuilds a state with the same shape as `like`.
    fn from_flat(flat: &[f64], like: &Self) -> Self;
    /// CSV column names, in `to_flat` order.
    fn columns(&self) -> Vec<String>;
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

/// A point carried in both charts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub theta: Vec<f64>,
    pub eta: Vec<f64>,
}

impl PhaseState for DualState {
    fn to_flat(&self) -> Vec<f64> {
        self.theta.iter().chain(&self.eta).copied().collect()
    }

    fn from_flat(flat: &[f64], like: &Self) -> Self {
        let m = like.theta.len();
        DualState {
            theta: flat[..m].to_vec(),
            eta: flat[m..].to_vec(),
        }
    }

    fn columns(&self) -> Vec<String> {
        numbered("theta", self.theta.len())
            .chain(numbered("eta", self.eta.len()))
            .collect()
    }
}

/// Ray position and canonical momentum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl RayState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::Dimension {
                expected: q.len(),
                got: p.len(),
            });
        }
        if q.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ray state"));
        }
        Ok(RayState { q, p })
    }
}

impl PhaseState for RayState {
    fn to_flat(&self) -> Vec<f64> {
        self.q.iter().chain(&self.p).copied().collect()
    }

    fn from_flat(flat: &[f64], like: &Self) -> Self {
        let m = like.q.len();
        RayState {
            q: flat[..m].to_vec(),
            p: flat[m..].to_vec(),
        }
    }

    fn columns(&self) -> Vec<String> {
        numbered("q", self.q.len()).chain(numbered("p", self.p.len())).collect()
    }
}

/// Dual coordinates plus the outcome probabilities of a finite family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicatorState {
    pub theta: Vec<f64>,
    pub eta: Vec<f64>,
    pub probs: Vec<f64>,
}

impl PhaseState for ReplicatorState {
    fn to_flat(&self) -> Vec<f64> {
        self.theta
            .iter()
            .chain(&self.eta)
            .chain(&self.probs)
            .copied()
            .collect()
    }

    fn from_flat(flat: &[f64], like: &Self) -> Self {
        let m = like.theta.len();
        ReplicatorState {
            theta: flat[..m].to_vec(),
            eta: flat[m..2 * m].to_vec(),
            probs: flat[2 * m..].to_vec(),
        }
    }

    fn columns(&self) -> Vec<String> {
        numbered("theta", self.theta.len())
            .chain(numbered("eta", self.eta.len()))
            .chain(numbered("p", self.probs.len()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample<S> {
    pub t: f64,
    pub s: f64,
    pub tau: f64,
    #[serde(flatten)]
    pub state: S,
}

impl<S> Sample<S> {
    pub fn param(&self, p: Param) -> f64 {
        match p {
            Param::T => self.t,
            Param::S => self.s,
            Param::Tau => self.tau,
        }
    }

    pub(crate) fn set_param(&mut self, p: Param, v: f64) {
        match p {
            Param::T => self.t = v,
            Param::S => self.s = v,
            Param::Tau => self.tau = v,
        }
    }
}

/// A sampled flow. Every sample carries all three parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<S = DualState> {
    pub driver: Driver,
    pub model: String,
    pub termination: Termination,
    pub config: IntegratorConfig,
    pub samples: Vec<Sample<S>>,
}

/// Trajectory of a ray through a refractive medium.
pub type RayTrajectory = Trajectory<RayState>;

impl<S: PhaseState> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> &Sample<S> {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample<S> {
        self.samples.last().expect("trajectories hold at least one sample")
    }

    pub fn param_values(&self, p: Param) -> Vec<f64> {
        self.samples.iter().map(|s| s.param(p)).collect()
    }

    pub fn is_strictly_increasing(&self, p: Param) -> bool {
        self.samples.windows(2).all(|w| w[1].param(p) > w[0].param(p))
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut cols: Vec<String> = Param::ALL.iter().map(|p| p.name().to_string()).collect();
        cols.extend(self.first().state.columns());
        cols
    }

    /// Interpolates every column at `value` of parameter `p` with cubic
    /// Hermite splines. `p` must be strictly increasing.
    pub fn interpolate(&self, p: Param, value: f64) -> Result<Sample<S>> {
        let knots = self.param_values(p);
        if !self.is_strictly_increasing(p) {
            return Err(Error::NonMonotone(p.name()));
        }
        let (lo, hi) = (knots[0], *knots.last().unwrap());
        let slack = 1e-12 * (hi - lo).abs().max(1.0);
        if !(value >= lo - slack && value <= hi + slack) {
            return Err(Error::Domain(format!(
                "{p} = {value} outside trajectory range [{lo}, {hi}]"
            )));
        }
        let rows: Vec<Vec<f64>> = self.samples.iter().map(flat_row).collect();
        let r = Resampler::new(knots, &rows, &[])?;
        Ok(unflat_row(&r.eval(value), &self.first().state))
    }
}

pub(crate) fn flat_row<S: PhaseState>(s: &Sample<S>) -> Vec<f64> {
    let mut row = vec![s.t, s.s, s.tau];
    row.extend(s.state.to_flat());
    row
}

pub(crate) fn unflat_row<S: PhaseState>(row: &[f64], like: &S) -> Sample<S> {
    Sample {
        t: row[0],
        s: row[1],
        tau: row[2],
        state: S::from_flat(&row[3..], like),
    }
}

/// A plain vector-valued time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub t: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Max over time of `|values[k][i] - values[0][i]|`, per component.
    pub fn max_drift(&self) -> Vec<f64> {
        let Some(first) = self.values.first() else {
            return Vec::new();
        };
        let mut drift = vec![0.0_f64; first.len()];
        for row in &self.values {
            for (d, (v, v0)) in drift.iter_mut().zip(row.iter().zip(first)) {
                *d = d.max((v - v0).abs());
            }
        }
        drift
    }
}
