//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an operation argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A spectral filter left no power inside its pass band.
    #[error("empty spectrum: {0}")]
    EmptySpectrum(String),

    /// A statistical estimate was requested from an empty sample.
    #[error("undefined estimate: {0}")]
    UndefinedEstimate(String),

    /// Fiber calibration could not produce a finite best fit.
    #[error("calibration failed: {0}")]
    CalibrationFailed(String),

    /// A scenario configuration failed validation or parsing.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
