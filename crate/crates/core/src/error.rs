//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside its admissible domain.
    #[error("invalid argument: {0}")]
    Domain(String),
    /// The request is well formed but the routine cannot serve it.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// A numerical routine failed to converge or produced a non-finite value.
    #[error("numerical failure: {0}")]
    Numeric(String),
    /// A matrix or data set is degenerate (singular, empty, constant).
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("config: missing required keys: {0}")]
    ConfigMissing(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn check_alpha(name: &str, alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("{name} = {alpha} must lie in (0, 1)")))
    }
}
