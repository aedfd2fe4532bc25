use thiserror::Error;

/// Errors produced by construction, validation, and I/O of tabular-RL artifacts.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its documented range (e.g. `noise` not in [0,1]).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An MDP, policy, or table violates a structural invariant
    /// (rows not summing to 1, rewards outside [0,1], ragged arrays).
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// Two artifacts that must share (H, S, A) dimensions do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An index (step, state, or action) is out of range.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// A sampling source that must be nonempty is empty.
    #[error("empty source: {0}")]
    EmptySource(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
