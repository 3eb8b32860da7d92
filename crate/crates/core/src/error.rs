use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("argument out of range: {0}")]
    Range(String),
    #[error("non-finite value during simulation: {0}")]
    NonFinite(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("unknown identity `{0}`")]
    UnknownIdentity(String),
    #[error("unknown formula `{name}`; available: {available}")]
    UnknownFormula { name: String, available: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
