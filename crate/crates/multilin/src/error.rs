//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by tensor algebra, decompositions, layers, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mode {mode} out of range for order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("rank {rank} exceeds dimension {dim} on mode {mode}")]
    RankTooLarge { mode: usize, rank: usize, dim: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate factor: {0}")]
    DegenerateFactor(String),

    #[error("training-mode batch statistics need at least 2 samples, got {0}")]
    BatchTooSmall(usize),

    #[error("empty test set")]
    EmptyTestSet,

    #[error("non-finite loss {loss} at epoch {epoch}; training diverged")]
    Diverged { epoch: usize, loss: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
