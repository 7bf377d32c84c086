use std::fmt;

/// Errors produced by the inference engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied parameter or shape is out of contract.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input bytes have the wrong overall shape (e.g. a truncated feature file).
    #[error("malformed input: {0}")]
    Malformed(String),

    /// A decoded value violates a domain invariant.
    #[error("validation failed at {location}: {reason}")]
    Validation { location: String, reason: String },

    /// A computation produced NaN/inf or failed to converge.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The input carries no usable information (zero energy, zero lag-0 autocorrelation, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Streaming state does not match the weights it is driven with.
    #[error("state error: {0}")]
    State(String),

    /// Binary container parse failure with the byte offset where it happened.
    #[error("{context} at byte offset {offset}")]
    Format { offset: u64, context: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl fmt::Display) -> Self {
        Error::Parameter(msg.to_string())
    }

    pub(crate) fn numeric(msg: impl fmt::Display) -> Self {
        Error::Numeric(msg.to_string())
    }
}
