use thiserror::Error;

use crate::ids::UeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown UE {0}")]
    UnknownUe(UeId),

    #[error("improper coloring: {0}")]
    ImproperColoring(String),

    #[error("assignment conflict: {0}")]
    AssignmentConflict(String),

    #[error("traffic data: {0}")]
    Traffic(String),

    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("insufficient history: need {needed} samples, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("policy: {0}")]
    Policy(String),

    #[error("invalid config: {}", describe_config(.path, .message))]
    Config { path: String, message: String },

    #[error("codec: {0}")]
    Codec(String),

    #[error("transport: {0}")]
    Transport(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn describe_config(path: &str, message: &str) -> String {
    let first = path.split(", ").next().unwrap_or(path);
    if path.is_empty() || message.starts_with(first) {
        message.to_string()
    } else {
        format!("{path}: {message}")
    }
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
