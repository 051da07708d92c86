use thiserror::Error;

/// Errors raised by the allocation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("infeasible instance: {0}")]
    Infeasible(String),
    #[error("division guard tripped: {0}")]
    DivisionGuard(String),
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
