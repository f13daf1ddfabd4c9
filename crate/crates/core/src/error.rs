use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("covariance not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    UnitDelayRequired(&'static str),

    #[error("time index {k} out of range 0..{horizon}")]
    TimeOutOfRange { k: usize, horizon: usize },

    #[error("incomplete trace: {0}")]
    IncompleteTrace(String),

    #[error("calibration target {target} unreachable: rates span [{low}, {high}] over lambda in [{lambda_low}, {lambda_high}]")]
    Unreachable {
        target: f64,
        low: f64,
        high: f64,
        lambda_low: f64,
        lambda_high: f64,
    },

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

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable category used by the CLI and the C ABI.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::NotPsd { .. } | Error::Singular(_) => "numeric",
            Error::InvalidModel(_) => "model",
            Error::Config(_) | Error::UnitDelayRequired(_) | Error::TimeOutOfRange { .. } => {
                "config"
            }
            Error::IncompleteTrace(_) => "trace",
            Error::Unreachable { .. } => "calibration",
            Error::Io { .. } => "io",
            Error::Json { .. } | Error::Csv(_) => "format",
        }
    }

    pub(crate) fn dim(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
