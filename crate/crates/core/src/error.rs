use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty episode")]
    EmptyEpisode,
    #[error("non-finite reward at index {0}")]
    NonFiniteReward(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid action id {id} for action space of size {size}")]
    InvalidAction { id: usize, size: usize },
    #[error("unknown action name {0:?}")]
    UnknownActionName(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("malformed container: {0}")]
    Format(String),
    #[error("undefined statistic: {0}")]
    Undefined(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
