use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dims(String),

    #[error("layout does not fit: {0}")]
    Layout(String),

    #[error(transparent)]
    Ckks(#[from] plora_ckks::CkksError),
}

pub type Result<T> = std::result::Result<T, LinalgError>;
