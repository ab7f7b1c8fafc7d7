use thiserror::Error;

/// Errors raised across the sampling library and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid target specification: {0}")]
    InvalidTarget(String),

    #[error("covariance matrix {index} is not symmetric positive definite")]
    NotPositiveDefinite { index: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("target has no gradient")]
    GradientUnavailable,

    #[error("non-finite gradient at state {state:?}")]
    NonFiniteGradient { state: Vec<f64> },

    #[error("reflection line is degenerate: rejected candidate coincides with its nearest particle")]
    DegenerateLine,

    #[error("pinball reflection is planar; got dimension {0}")]
    UnsupportedDimension(usize),

    #[error("invalid kernel parameter: {0}")]
    InvalidKernel(String),

    #[error("current state {state:?} has zero target density")]
    InvalidCurrentState { state: Vec<f64> },

    #[error("internal invariant violated: {0}")]
    Invariant(&'static str),

    #[error("population is degenerate: {0}")]
    DegeneratePopulation(String),

    #[error("all importance weights vanished (max log-weight {max_log_weight})")]
    DegenerateWeights { max_log_weight: f64 },

    #[error("weights are not a valid simplex: {0}")]
    InvalidSimplex(String),

    #[error("sampling from the holed importance function exceeded {attempts} attempts")]
    HoleConfiguration { attempts: usize },

    #[error("{0}")]
    Diagnostics(String),

    #[error("grid too coarse: ratios {coarse} and {fine} differ by more than 1%")]
    GridResolution { coarse: f64, fine: f64 },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("data error at line {line}: {message}")]
    Data { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
