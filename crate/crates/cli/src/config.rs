use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use igflow_core::dynamics::{DomainGuard, IntegratorConfig, Method, Param};
use igflow_core::io::Format;

use crate::args::{IntegratorArgs, PointArgs, SimulateArgs};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    GradientEta,
    GradientTheta,
    Geodesic,
    Natural,
    Ray,
    Replicator,
}

impl Flow {
    pub fn name(self) -> &'static str {
        match self {
            Flow::GradientEta => "gradient_eta",
            Flow::GradientTheta => "gradient_theta",
            Flow::Geodesic => "geodesic",
            Flow::Natural => "natural",
            Flow::Ray => "ray",
            Flow::Replicator => "replicator",
        }
    }

    /// The parameter the flow is integrated in, or `None` if any works.
    pub fn native_param(self) -> Option<Param> {
        match self {
            Flow::Geodesic => Some(Param::Tau),
            Flow::Ray => None,
            _ => Some(Param::T),
        }
    }
}

impl fmt::Display for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Flow {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "gradient_eta" => Flow::GradientEta,
            "gradient_theta" => Flow::GradientTheta,
            "geodesic" => Flow::Geodesic,
            "natural" => Flow::Natural,
            "ray" => Flow::Ray,
            "replicator" => Flow::Replicator,
            other => {
                return Err(CliError::config(format!(
                    "unknown flow `{other}` (expected gradient_eta, gradient_theta, geodesic, natural, ray or replicator)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: String,
    pub flow: Flow,
    /// Named initial values as given, e.g. `mu -> "1"` or `eta -> "0,1"`.
    pub initial: BTreeMap<String, String>,
    pub span: (f64, f64),
    pub param: Param,
    pub integrator: IntegratorConfig,
    pub medium: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

pub fn parse_real(key: &str, text: &str) -> Result<f64, CliError> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| CliError::config(format!("`{key}` expects a number, got `{text}`")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::config(format!("`{key}` must be finite, got `{text}`")))
    }
}

pub fn parse_list(key: &str, text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',').map(|part| parse_real(key, part)).collect()
}

pub fn parse_span(key: &str, text: &str) -> Result<(f64, f64), CliError> {
    let (a, b) = text
        .split_once(':')
        .ok_or_else(|| CliError::config(format!("`{key}` expects a span `a:b`, got `{text}`")))?;
    Ok((parse_real(key, a)?, parse_real(key, b)?))
}

/// `k=v,k=v` into a map; values must be numbers.
pub fn parse_params(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for pair in text.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("`--params` expects key=value pairs, got `{pair}`")))?;
        let k = k.trim().to_string();
        parse_real(&k, v)?;
        map.insert(k, v.trim().to_string());
    }
    Ok(map)
}

/// Initial values named on the command line.
pub fn point_map(point: &PointArgs) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = match &point.params {
        Some(p) => parse_params(p)?,
        None => BTreeMap::new(),
    };
    for (key, value) in [("mu", point.mu), ("sigma2", point.sigma2), ("beta", point.beta), ("nu", point.nu)] {
        if let Some(v) = value {
            map.insert(key.to_string(), v.to_string());
        }
    }
    for (key, value) in [("eta", &point.eta), ("theta", &point.theta)] {
        if let Some(v) = value {
            map.insert(key.to_string(), v.clone());
        }
    }
    Ok(map)
}

fn apply_integrator(cfg: &mut IntegratorConfig, key: &str, value: &str) -> Result<(), CliError> {
    match key {
        "method" => {
            cfg.method = match value {
                "rk4" | "rk4_fixed" => Method::Rk4Fixed,
                "rkf45" | "rkf45_adaptive" => Method::Rkf45Adaptive,
                other => return Err(CliError::config(format!("unknown method `{other}` (expected rk4 or rkf45)"))),
            }
        }
        "step" => cfg.step = parse_real(key, value)?,
        "abs_tol" => cfg.abs_tol = parse_real(key, value)?,
        "rel_tol" => cfg.rel_tol = parse_real(key, value)?,
        "max_steps" => {
            cfg.max_steps = value
                .trim()
                .parse()
                .map_err(|_| CliError::config(format!("`max_steps` expects a positive integer, got `{value}`")))?
        }
        "domain_guard" => {
            cfg.domain_guard = match value {
                "stop" | "stop_with_error" => DomainGuard::StopWithError,
                "truncate" | "truncate_trajectory" => DomainGuard::TruncateTrajectory,
                other => {
                    return Err(CliError::config(format!(
                        "unknown domain_guard `{other}` (expected stop or truncate)"
                    )))
                }
            }
        }
        other => return Err(CliError::config(format!("unknown integrator key `{other}`"))),
    }
    Ok(())
}

/// Integrator settings from flags on top of `base`.
pub fn integrator_from_flags(base: IntegratorConfig, args: &IntegratorArgs) -> Result<IntegratorConfig, CliError> {
    let mut cfg = base;
    let pairs = [
        ("method", args.method.clone()),
        ("step", args.step.map(|v| v.to_string())),
        ("abs_tol", args.abs_tol.map(|v| v.to_string())),
        ("rel_tol", args.rel_tol.map(|v| v.to_string())),
        ("max_steps", args.max_steps.map(|v| v.to_string())),
        ("domain_guard", args.domain_guard.clone()),
    ];
    for (key, value) in pairs {
        if let Some(v) = value {
            apply_integrator(&mut cfg, key, &v)?;
        }
    }
    cfg.validate().map_err(CliError::from)?;
    Ok(cfg)
}

/// Sections of a config file, keyed by section name.
#[derive(Debug, Default)]
struct FileConfig {
    run: BTreeMap<String, String>,
    initial: BTreeMap<String, String>,
    integrator: BTreeMap<String, String>,
    output: BTreeMap<String, String>,
}

fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let ini = Ini::load_from_file(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    let mut file = FileConfig::default();
    for (section, props) in ini.iter() {
        let (target, allowed): (&mut BTreeMap<String, String>, &[&str]) = match section {
            Some("run") => (&mut file.run, &["model", "flow", "param", "span", "medium"]),
            Some("initial") => (&mut file.initial, &[]),
            Some("integrator") => (
                &mut file.integrator,
                &["method", "step", "abs_tol", "rel_tol", "max_steps", "domain_guard"],
            ),
            Some("output") => (&mut file.output, &["path", "format"]),
            None if props.is_empty() => continue,
            None => return Err(CliError::config("config keys must sit inside a [section]")),
            Some(other) => return Err(CliError::config(format!("unknown config section [{other}]"))),
        };
        for (k, v) in props.iter() {
            if !allowed.is_empty() && !allowed.contains(&k) {
                let name = section.unwrap_or_default();
                return Err(CliError::config(format!("unknown key `{k}` in [{name}]")));
            }
            target.insert(k.to_string(), v.to_string());
        }
    }
    Ok(file)
}

impl RunConfig {
    /// Merges the optional config file with the flags; flags win.
    pub fn resolve(args: &SimulateArgs) -> Result<RunConfig, CliError> {
        let file = match &args.config {
            Some(path) => load_file(path)?,
            None => FileConfig::default(),
        };

        let flow: Flow = args
            .flow
            .clone()
            .or_else(|| file.run.get("flow").cloned())
            .ok_or_else(|| CliError::config("missing --flow"))?
            .parse()?;
        let model = args
            .model
            .clone()
            .or_else(|| file.run.get("model").cloned())
            .or_else(|| (flow == Flow::Ray).then(|| "optics".to_string()))
            .ok_or_else(|| CliError::config("missing --model"))?;

        let flag_span = [(Param::T, &args.t), (Param::S, &args.s), (Param::Tau, &args.tau)]
            .into_iter()
            .find_map(|(p, v)| v.as_ref().map(|v| (p, v.clone())));
        let (param, span) = match flag_span {
            Some((p, text)) => (p, parse_span(p.name(), &text)?),
            None => {
                let text = file
                    .run
                    .get("span")
                    .ok_or_else(|| CliError::config("missing span (--t, --s or --tau)"))?;
                let param = match file.run.get("param") {
                    Some(p) => p.parse().map_err(CliError::from)?,
                    None => flow.native_param().unwrap_or(Param::T),
                };
                (param, parse_span("span", text)?)
            }
        };

        let mut initial = point_map(&args.point)?;
        for (key, value) in [("q", &args.q), ("p", &args.p), ("dir", &args.dir)] {
            if let Some(v) = value {
                initial.insert(key.to_string(), v.clone());
            }
        }
        if initial.is_empty() {
            initial = file.initial.clone();
        }

        let mut integrator = IntegratorConfig::default();
        for (k, v) in &file.integrator {
            apply_integrator(&mut integrator, k, v)?;
        }
        let integrator = integrator_from_flags(integrator, &args.integrator)?;

        let medium = args.medium.clone().or_else(|| file.run.get("medium").map(PathBuf::from));
        let out = args.out.clone().or_else(|| file.output.get("path").map(PathBuf::from));
        let format = match args.format.clone().or_else(|| file.output.get("format").cloned()) {
            Some(f) => f.parse().map_err(CliError::from)?,
            None => match out.as_ref().and_then(|p| p.extension()).and_then(|e| e.to_str()) {
                Some("json") => Format::Json,
                _ => Format::Csv,
            },
        };

        Ok(RunConfig {
            model,
            flow,
            initial,
            span,
            param,
            integrator,
            medium,
            out,
            format,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_and_lists() {
        assert_eq!(parse_span("t", "0:0.5").unwrap(), (0.0, 0.5));
        assert_eq!(parse_span("t", "-1:2").unwrap(), (-1.0, 2.0));
        assert!(parse_span("t", "0..1").is_err());
        assert_eq!(parse_list("eta", "0, 1").unwrap(), vec![0.0, 1.0]);
        assert!(parse_list("eta", "0,nan").is_err());
        let p = parse_params("beta=1, nu=2").unwrap();
        assert_eq!(p.get("nu").map(String::as_str), Some("2"));
        assert!(parse_params("beta").is_err());
    }

    #[test]
    fn integrator_keys() {
        let mut cfg = IntegratorConfig::default();
        apply_integrator(&mut cfg, "method", "rkf45").unwrap();
        apply_integrator(&mut cfg, "domain_guard", "truncate").unwrap();
        apply_integrator(&mut cfg, "step", "0.01").unwrap();
        assert_eq!(cfg.method, Method::Rkf45Adaptive);
        assert_eq!(cfg.domain_guard, DomainGuard::TruncateTrajectory);
        assert!(apply_integrator(&mut cfg, "order", "4").is_err());
    }
}
