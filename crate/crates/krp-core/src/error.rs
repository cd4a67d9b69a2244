//! Error type shared by every module of the numerical core.

use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// Operand dimensions do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Param(String),
    /// The sequence carries no usable temporal signal (too few frames,
    /// constant features, ...).
    #[error("degenerate sequence: {0}")]
    DegenerateSequence(String),
    /// A factorization or eigen solve failed.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Descriptors of different kinds were mixed in one operation.
    #[error("descriptor kind mismatch: {0}")]
    Kind(String),
    /// An index is out of range.
    #[error("index out of range: {0}")]
    Index(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateSequence(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
