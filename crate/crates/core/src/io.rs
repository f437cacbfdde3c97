//! Trajectory export as CSV or JSON, with round-trip number formatting.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::dynamics::{PhaseState, Trajectory};
use crate::error::{Error, Result};

/// Shortest decimal string that parses back to exactly `x` (at most 17
/// significant digits). Plain notation in `[1e-5, 1e16)`, scientific
/// otherwise.
pub fn format_number(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let a = x.abs();
    if (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Comma-separated rendering of a slice.
pub fn format_list(values: &[f64]) -> String {
    values.iter().map(|v| format_number(*v)).collect::<Vec<_>>().join(",")
}

/// CSV with header `t,s,tau,<state columns>` and one row per sample.
pub fn trajectory_csv<S: PhaseState>(traj: &Trajectory<S>) -> String {
    let mut out = traj.column_names().join(",");
    out.push('\n');
    for s in &traj.samples {
        let mut row = vec![s.t, s.s, s.tau];
        row.extend(s.state.to_flat());
        let _ = writeln!(out, "{}", format_list(&row));
    }
    out
}

/// `{"driver": ..., "model": ..., "termination": ..., "config": ..., "samples": [...]}`.
pub fn trajectory_json<S: PhaseState + Serialize>(traj: &Trajectory<S>) -> Result<String> {
    serde_json::to_string(traj).map_err(|e| Error::Parse(e.to_string()))
}

/// Output file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Parse(format!("unknown format `{other}` (expected csv or json)"))),
        }
    }
}

pub fn render<S: PhaseState + Serialize>(traj: &Trajectory<S>, format: Format) -> Result<String> {
    match format {
        Format::Csv => Ok(trajectory_csv(traj)),
        Format::Json => trajectory_json(traj),
    }
}

pub fn write_trajectory<S: PhaseState + Serialize>(
    traj: &Trajectory<S>,
    path: impl AsRef<Path>,
    format: Format,
) -> Result<()> {
    std::fs::write(path, render(traj, format)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{gradient_flow, IntegratorConfig};
    use crate::manifold::CoordVector;
    use crate::models::gaussian_model;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-7, 6.02214076e23, 1e16, 9.999e15, 1e-5, 123456.789, -0.0, f64::MIN_POSITIVE] {
            let s = format_number(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
            let digits = s.trim_start_matches('-').split('e').next().unwrap().replace('.', "");
            assert!(digits.trim_start_matches('0').len() <= 17, "{s}");
        }
        assert_eq!(format_number(0.5), "0.5");
        assert_eq!(format_number(2.0), "2");
        assert_eq!(format_number(1.5e-7), "1.5e-7");
    }

    #[test]
    fn csv_layout() {
        let x0 = CoordVector::eta(vec![0.0, 1.0]).unwrap();
        let traj = gradient_flow(&gaussian_model(), &x0, (0.0, 0.01), &IntegratorConfig::default()).unwrap();
        let csv = trajectory_csv(&traj);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,s,tau,theta_1,theta_2,eta_1,eta_2");
        assert_eq!(lines.next().unwrap(), "0,0,0,0,-0.5,0,1");
        assert_eq!(csv.lines().count(), traj.len() + 1);
    }

    #[test]
    fn json_layout() {
        let x0 = CoordVector::eta(vec![0.0, 1.0]).unwrap();
        let traj = gradient_flow(&gaussian_model(), &x0, (0.0, 0.002), &IntegratorConfig::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&trajectory_json(&traj).unwrap()).unwrap();
        assert_eq!(v["driver"], "gradient_eta");
        assert_eq!(v["samples"].as_array().unwrap().len(), 3);
        assert_eq!(v["samples"][0]["eta"][1], 1.0);
        let back: Trajectory = serde_json::from_value(v).unwrap();
        assert_eq!(back, traj);
    }
}
