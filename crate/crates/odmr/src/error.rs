use thiserror::Error;

/// Library-wide error type.
///
/// The three variants map onto the CLI exit codes: invalid parameters and
/// configuration (2), bad measured data (3), numerical failure (4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
