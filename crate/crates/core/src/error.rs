use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Relative heading sits on the boundary of the region where `log` is a bijection.
    #[error("log is undefined at heading {0} (|theta| must be < pi)")]
    Domain(f64),

    #[error("matrix is singular or rank deficient: {0}")]
    Singular(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("method {method} is not available in the {space} representation")]
    UnsupportedMethod { method: &'static str, space: &'static str },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("calibration is vacuous (quantile index exceeds calibration size)")]
    Vacuous,

    #[error("score kind mismatch: {0}")]
    KindMismatch(String),

    #[error("degenerate regression: {0}")]
    Degenerate(&'static str),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("missing input: {0}")]
    Missing(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Schema(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
