use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what}: n = {n} exceeds the limit of {max}")]
    SizeGuard { what: &'static str, n: usize, max: usize },

    #[error("degenerate class: {0}")]
    DegenerateClass(&'static str),

    #[error("non-trainable loss: {0}")]
    NonTrainableLoss(String),

    #[error("degenerate variance: p = {0} gives n*p*(1-p) = 0")]
    DegenerateVariance(f64),

    #[error("unknown monotonicity property id {0} (expected 1, 2, 3 or 4)")]
    UnknownProperty(u8),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
