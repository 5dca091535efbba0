use thiserror::Error;

/// Errors raised by the estimators and their building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An invalid or inconsistent configuration value.
    #[error("configuration error: {0}")]
    Config(String),
    /// An argument outside the domain where a quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical procedure failed to converge or produced a non-finite value.
    #[error("numerical error: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
