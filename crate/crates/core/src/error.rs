use thiserror::Error;

/// Failure modes shared by every module.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input outside the region where the requested quantity exists.
    #[error("domain error: {0}")]
    Domain(String),
    /// Working precision or truncation insufficient for the requested result.
    #[error("precision error: {0}")]
    Precision(String),
    /// Dense table would exceed the configured cell budget.
    #[error("size guard: {cells} cells requested, limit {limit}")]
    Size { cells: u128, limit: u128 },
    /// Caller violated an operation contract (wrong regime, bad argument).
    #[error("contract violation: {0}")]
    Contract(String),
    /// Operation not available in the active arithmetic mode.
    #[error("arithmetic mode: {0}")]
    Mode(String),
    /// Malformed model or configuration document.
    #[error("invalid specification: {0}")]
    Spec(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn precision(msg: impl Into<String>) -> Error {
    Error::Precision(msg.into())
}
