use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Induced subgraph is not connected, so it has no graphlet type.
    #[error("node set {0:?} does not induce a connected subgraph")]
    Disconnected(Vec<usize>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("sampler initialization failed: {0}")]
    Init(String),

    #[error("refusing to enumerate: {0}")]
    TooLarge(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for configuration problems, 3 for bad input
    /// data, 4 for numeric failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Argument(_) => 2,
            Error::Numeric(_) => 4,
            Error::Parse { .. }
            | Error::Disconnected(_)
            | Error::Init(_)
            | Error::TooLarge(_)
            | Error::Io(_)
            | Error::Json(_) => 3,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
