use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("interpretation error: unknown symbol `{0}`")]
    UnknownSymbol(String),

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("encoding error: unknown token `{0}`")]
    UnknownToken(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
