use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("model expects {model} actions, environment has {env}")]
    ActionMismatch { model: usize, env: usize },
    #[error("degenerate baseline for {0}: human score equals random score")]
    DegenerateBaseline(String),
    #[error("malformed scores: {0}")]
    Scores(String),
    #[error(transparent)]
    Model(#[from] seqrl_models::Error),
    #[error(transparent)]
    Data(#[from] seqrl_core::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
