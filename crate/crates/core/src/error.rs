use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the denoising engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("batch statistics undefined: {0} elements per channel (need at least 2)")]
    DegenerateBatch(usize),

    #[error("backward called without a cached train-mode forward pass")]
    MissingCache,

    #[error("layer is in eval mode; backward requires train mode")]
    EvalMode,

    #[error("malformed image {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("config error at line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
