//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A malformed line in a JSONL score artifact.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Structurally valid input that violates a contract (range, dimension,
    /// duplicate id, inconsistent prompt set, bad parameter).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A split view that selected no rows.
    #[error("empty split: no rows tagged '{0}'")]
    EmptySplit(String),

    /// A prompt family absent from the matrix.
    #[error("unknown prompt family: {0}")]
    UnknownFamily(String),

    /// Not enough data for the requested statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A metric that has no defined value on this input (e.g. AUROC with a
    /// single class present). Never silently replaced by a sentinel.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Calibrator fitting failure.
    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the error reflects bad input rather than a computation
    /// that could not proceed. The CLI maps this to its exit codes.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::InvalidInput(_)
                | Error::EmptySplit(_)
                | Error::UnknownFamily(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
