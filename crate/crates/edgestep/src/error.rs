use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside the documented domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation is only defined for gamma in [0, 1) (or delta >= 0).
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    /// A queried checkpoint time was never recorded.
    #[error("no checkpoint at t={0}")]
    MissingCheckpoint(u64),

    /// Not enough data points for the requested estimator.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Malformed textual input (spec strings, CSV tables).
    #[error("parse error: {0}")]
    Parse(String),

    /// A replica of an ensemble failed; the index identifies which one.
    #[error("replica {index}: {message}")]
    Replica { index: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
