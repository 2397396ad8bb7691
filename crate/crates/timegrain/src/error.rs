use thiserror::Error;

/// Errors emitted anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor/matrix shapes do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// Invalid configuration value or unusable hyperparameter combination.
    #[error("configuration error: {0}")]
    Config(String),
    /// Malformed or unusable input data.
    #[error("data error: {0}")]
    Data(String),
    /// Non-finite value or failed numeric check.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// Checkpoint does not match the requested run (model dims, dtype, ...).
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Incompatible(_) => 1,
            Error::Data(_) | Error::Io(_) => 2,
            Error::Dimension(_) | Error::Numeric(_) => 3,
        }
    }
}
