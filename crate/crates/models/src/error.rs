use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {op} at step {step}")]
    NonFinite { op: &'static str, step: usize },
    #[error("training diverged: loss is {loss} at epoch {epoch}, step {step}")]
    Divergence { epoch: usize, step: usize, loss: f64 },
    #[error("every position of the batch is padding")]
    AllMasked,
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Data(#[from] seqrl_core::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
