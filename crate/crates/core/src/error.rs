use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("depth is undefined: all weights are zero")]
    UndefinedDepth,

    #[error("position {0:?} lies outside the unit cube; check the scene scaling")]
    OutOfBounds([f64; 3]),

    #[error("model parameters are corrupted: {0}")]
    CorruptedModel(String),

    #[error("training diverged at step {step}: {reason}")]
    Divergence { step: u64, reason: String },

    #[error("invalid scan frame: {0}")]
    InvalidFrame(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
