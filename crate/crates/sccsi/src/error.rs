use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A denominator or pseudo-inverse degenerated (zero uplink channel,
    /// zero-norm truth vector, vanishing MMSE denominator, ...).
    #[error("singular operation: {0}")]
    Singular(String),

    /// A serialized artifact (checkpoint, dataset container, CSV) failed to parse.
    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
