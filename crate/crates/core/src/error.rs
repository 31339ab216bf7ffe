use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("version mismatch: {0}")]
    Version(String),
    #[error("empty segment dictionary")]
    EmptyDictionary,
    #[error("brute-force size guard exceeded: {0}")]
    GuardExceeded(String),
    #[error("non-finite gradient in parameter column {column}")]
    NonFiniteGradient { column: usize },
    #[error("sentence {id}: {message}")]
    Misaligned { id: usize, message: String },
    #[error("decoding with c = {c}: {source}")]
    Decode { c: f64, source: Box<Error> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}

pub(crate) fn format<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}
