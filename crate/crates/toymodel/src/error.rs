use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid split point: {0}")]
    Split(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training diverged")]
    Diverged,

    #[error(transparent)]
    Pll(#[from] plora_pll::PllError),
}

pub type Result<T> = std::result::Result<T, ModelError>;
