use thiserror::Error;

#[derive(Debug, Error)]
pub enum CkksError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("too many values: {got} exceeds slot count {slots}")]
    Capacity { got: usize, slots: usize },

    #[error("key material does not match: {0}")]
    KeyMismatch(String),

    #[error("ciphertext level exhausted")]
    LevelExhausted,

    #[error("operand alignment: {0}")]
    Alignment(String),

    #[error("no rotation key for step {0}")]
    MissingRotationKey(i64),

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, CkksError>;
