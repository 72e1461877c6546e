use thiserror::Error;

#[derive(Debug, Error)]
pub enum TmaError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("moment of order {order} does not exist for {dist}")]
    MomentUndefined { order: u32, dist: String },

    #[error("insufficient innovation history: need index {needed}, have from {available}")]
    InsufficientHistory { needed: i64, available: i64 },

    #[error("contraction factor estimate {delta} is too close to 1 for a usable truncation bound")]
    DeltaTooClose { delta: f64 },

    #[error("model does not have the required shape: {0}")]
    ShapeMismatch(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, TmaError>;
