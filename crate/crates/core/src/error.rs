use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("non-finite value in {context} at step {step}")]
    NonFinite { context: &'static str, step: usize },

    #[error("quadrature did not converge: error estimate {estimate:e} above tolerance {tolerance:e}")]
    Quadrature { estimate: f64, tolerance: f64 },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("unknown bound `{0}`")]
    UnknownBound(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{aborted} of {trials} trials aborted (limit 0.1%): {first}")]
    TooManyAborts { aborted: u64, trials: u64, first: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

/// Fails with `InvalidParameter` unless `value > 0` and finite.
pub(crate) fn require_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be positive and finite, got {value}")))
    }
}

pub(crate) fn require_nonnegative(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("must be non-negative and finite, got {value}"),
        ))
    }
}
