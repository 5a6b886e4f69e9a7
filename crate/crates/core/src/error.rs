use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed data: {0}")]
    MalformedData(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("theory check failed: {0}")]
    TheoryViolation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code: 1 config, 2 data, 3 numerical, 4 theory violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) | Error::Shape(_) => 1,
            Error::MalformedData(_) | Error::Io { .. } => 2,
            Error::Numerical(_) | Error::Generation(_) => 3,
            Error::TheoryViolation(_) => 4,
        }
    }
}
