use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain violation: {0}")]
    Domain(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("metric is not symmetric positive-definite: {0}")]
    SingularMetric(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("family is not identifiable: {0}")]
    Identifiability(String),

    #[error("trajectory left the manifold domain at parameter {param}")]
    DomainExit { param: f64 },

    #[error("step limit of {0} steps reached")]
    StepLimit(usize),

    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),

    #[error("turning point: E - U = {gap} <= 0")]
    TurningPoint { gap: f64 },

    #[error("parameter column `{0}` is not strictly monotone")]
    NonMonotone(&'static str),

    #[error("grids do not match: {0}")]
    GridMismatch(String),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
