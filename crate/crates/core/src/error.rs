use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("argument out of supported range: {0}")]
    Range(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("point outside domain: {0}")]
    Domain(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("solver became unstable at step {step}")]
    Instability { step: usize },

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("quadrature did not reach tolerance: {0}")]
    Quadrature(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
