use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape { expected: (usize, usize), actual: (usize, usize) },

    #[error("infeasible SINR target {target_db:.2} dB: {reason}")]
    InfeasibleSinr { target_db: f64, reason: String },

    /// The reference map holds no object cells, so SINR is undefined.
    #[error("SINR undefined: reference map has no object cells")]
    NoObjects,

    #[error("format error at byte offset {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
