//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by preprocessing, training, clustering and persistence.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-contract input data.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An operation was called in the wrong phase (e.g. assignment before
    /// calibration) or with artifacts that do not belong together.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// The vocabulary presence filter removed every metric.
    #[error("presence threshold too strict: {0}")]
    ThresholdTooStrict(String),

    /// A loss or gradient became non-finite during training.
    #[error("training diverged at epoch {epoch}: {message}")]
    TrainingDiverged { epoch: usize, message: String },

    /// A cluster-validity index is undefined for the given labeling.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Model and data artifacts come from different preprocessing runs.
    #[error("model/data mismatch: {0}")]
    DataMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 invalid input, 3 invalid state,
    /// 4 training diverged.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::ThresholdTooStrict(_)
            | Error::UndefinedMetric(_)
            | Error::Io(_)
            | Error::Serde(_)
            | Error::Csv(_) => 2,
            Error::InvalidState(_) | Error::DataMismatch(_) => 3,
            Error::TrainingDiverged { .. } => 4,
        }
    }
}
