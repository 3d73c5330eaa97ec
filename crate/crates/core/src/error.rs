use std::path::PathBuf;

use thiserror::Error;

use crate::init::ConditionReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A gate or state produced a non-finite value.
    #[error("numeric overflow in {gate} at timestep {timestep}")]
    NumericOverflow { gate: &'static str, timestep: usize },

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    /// A variance configuration failed an initialization condition.
    #[error("initialization condition violated: {reason}")]
    ConditionViolation {
        reason: String,
        report: Option<Box<ConditionReport>>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(
        "{path}:{line}: missing value in column `{column}` (missing-value-robust cells are not supported)"
    )]
    UnsupportedMissingValue {
        path: PathBuf,
        line: usize,
        column: String,
    },

    #[error("feature {feature} is constant (std {std:e}); cannot standardize")]
    ConstantFeature { feature: usize, std: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
