use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid plant: {0}")]
    InvalidPlant(String),

    #[error("sampling period {0} s is not allowed (must be finite and at least 1 us)")]
    InvalidPeriod(f64),

    #[error("matrix `{0}` contains non-finite entries")]
    NonFinite(&'static str),

    #[error("{equation} Riccati iteration did not converge after {iterations} iterations (residual {residual:e})")]
    RiccatiNonConvergence {
        equation: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{0}")]
    NotStabilizable(String),

    #[error("discrete Lyapunov equation has no stationary solution: {0}")]
    Lyapunov(String),

    #[error("controller design failed at h = {period_ms} ms: {source}")]
    Design {
        period_ms: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid rate set: {0}")]
    InvalidRates(String),

    #[error("invalid level specification: {0}")]
    InvalidLevels(String),

    #[error("invalid disturbance pattern: {0}")]
    InvalidPattern(String),

    #[error("invalid energy budget: {0}")]
    InvalidBudget(String),

    #[error("profit undefined for level {level}, period index {period_index}: {reason}")]
    ProfitUndefined {
        level: usize,
        period_index: usize,
        reason: &'static str,
    },

    #[error("period {0} ms is not in the rate set")]
    UnknownPeriod(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("table file {path}: {message}")]
    TableFormat { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
