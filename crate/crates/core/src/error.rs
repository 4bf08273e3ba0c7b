use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("zero-norm vector: {0}")]
    ZeroNorm(String),
    #[error("empty neighborhood: {0}")]
    EmptyNeighborhood(String),
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dataset is empty: {0}")]
    EmptyDataset(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unknown node: {0}")]
    UnknownNode(String),
    #[error("isolated node {0} cannot form an episode")]
    IsolatedNode(String),

    #[error("staging error: {0}")]
    Staging(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse error classes, used by the command-line driver for exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Staging,
    Data,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Shape(_)
            | Error::NonFinite(_)
            | Error::ZeroNorm(_)
            | Error::UndefinedCorrelation(_) => ErrorKind::Numeric,
            Error::Staging(_) => ErrorKind::Staging,
            Error::Config(_) => ErrorKind::Config,
            Error::EmptyNeighborhood(_)
            | Error::Parse { .. }
            | Error::EmptyDataset(_)
            | Error::Validation(_)
            | Error::UnknownNode(_)
            | Error::IsolatedNode(_)
            | Error::Format(_)
            | Error::Io(_)
            | Error::Json(_) => ErrorKind::Data,
        }
    }
}
