use alloc::string::String;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A configuration value is outside its valid range.
    #[error("configuration error: {0}")]
    Config(String),

    /// An input vector or parameter structure has the wrong shape.
    #[error("shape error: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    /// The caller violated an operation precondition.
    #[error("usage error: {0}")]
    Usage(String),

    /// A computation produced a non-finite value.
    #[error("numeric error in {context} at index {index}")]
    Numeric { context: &'static str, index: usize },

    /// Training produced a non-finite loss; carries the offending batch item.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// A map or ratio is undefined at the requested point.
    #[error("singular: {0}")]
    Singular(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}
