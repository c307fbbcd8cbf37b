use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema mismatch: column `{0}` not found in header")]
    MissingColumn(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("inconsistent data: {0}")]
    InconsistentData(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate dataset: {0}")]
    Degenerate(String),
    #[error("scope `{0}` has no jumping instances")]
    EmptyScope(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
