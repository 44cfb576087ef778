use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("framing: {0}")]
    Framing(String),

    #[error("handshake: {0}")]
    Handshake(String),

    #[error("session: {0}")]
    Session(String),

    #[error("remote error: {0}")]
    Remote(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Ckks(#[from] plora_ckks::CkksError),

    #[error(transparent)]
    Linalg(#[from] plora_he_linalg::LinalgError),

    #[error(transparent)]
    Pll(#[from] plora_pll::PllError),

    #[error(transparent)]
    Model(#[from] plora_toymodel::ModelError),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;
