use thiserror::Error;

#[derive(Debug, Error)]
pub enum PllError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dims(String),

    #[error("training diverged: loss is not finite")]
    Diverged,

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, PllError>;
