use thiserror::Error;

/// Errors raised by dataset handling, model fitting and the benchmark harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Parameters are inconsistent with each other or with the data.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A file could not be parsed; positions are 1-based.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// An internal invariant was violated; indicates a bug in the caller or library.
    #[error("internal consistency violation: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
