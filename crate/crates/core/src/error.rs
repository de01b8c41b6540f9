use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("layout error: {0}")]
    Layout(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("launch error: {0}")]
    Launch(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("execution error: {0}")]
    Exec(String),
    #[error("empty search space: every candidate was rejected")]
    EmptySpace,
}

pub type Result<T> = std::result::Result<T, Error>;
