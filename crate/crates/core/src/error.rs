use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid data: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The censoring survival estimate fell below the positivity floor at a
    /// point where an inverse weight is required. Truncating the horizon
    /// (see `CensoringModel::choose_tau`) restores positivity.
    #[error(
        "positivity violation: censoring survival {survival:.4} < floor {floor} at time {time}; \
         truncate the horizon (tau) or lower the floor"
    )]
    Positivity { time: f64, survival: f64, floor: f64 },

    #[error("node is inestimable: {0}")]
    Inestimable(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Positivity { .. } | Error::Inestimable(_) | Error::Calibration(_)
        )
    }
}
