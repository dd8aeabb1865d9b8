use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no window exceeded the detection threshold")]
    NotFound,
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("under-determined system: {0}")]
    UnderDetermined(String),
    #[error("{count} channel entries fell below the division floor")]
    SingularChannel { count: usize },
    #[error("synchronization failed: {0}")]
    SyncFailure(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Container and dataset parse failures. Each variant maps to its own code.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("truncated input: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("size inconsistency: {0}")]
    SizeMismatch(String),
    #[error("bad dimension: {0}")]
    BadDimension(String),
}

impl FormatError {
    pub fn code(&self) -> u8 {
        match self {
            FormatError::BadMagic { .. } => 1,
            FormatError::Truncated { .. } => 2,
            FormatError::SizeMismatch(_) => 3,
            FormatError::BadDimension(_) => 4,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
