use thiserror::Error;

/// Errors raised by the engine. Malformed completion text is never an error;
/// it is reported through [`crate::parser::ParsedCompletion::diagnostics`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("state error: {0}")]
    State(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("length mismatch: left has {left} elements, right has {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: u64, detail: String },

    #[error("data error at line {line}, field `{field}`: {message}")]
    Data {
        line: usize,
        field: String,
        message: String,
    },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
