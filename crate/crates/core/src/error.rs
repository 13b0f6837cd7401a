use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("representation mismatch: expected {expected} field")]
    State { expected: &'static str },
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("fit window error: {0}")]
    Window(String),
    #[error("exponent construction failed: {0}")]
    Construction(String),
    #[error("time {t} is at or beyond the bound's pole {pole}")]
    Pole { t: f64, pole: f64 },
    #[error("non-finite values produced at t = {t}")]
    Overflow { t: f64 },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
