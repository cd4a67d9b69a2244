//! File formats, dataset IO, and the command-line surface for the
//! kernelized rank pooling toolkit. All numerics live in [`krp_core`].

pub use krp_core as core;

pub mod cli;
pub mod io;

use std::path::PathBuf;

/// Errors raised by IO, file formats, and command plumbing.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] krp_core::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Process exit code for this error: 2 usage, 3 data, 4 model/shape.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Io { .. } | Error::Format(_) | Error::Data(_) => 3,
            Error::Core(core) => match core {
                krp_core::Error::Shape(_) | krp_core::Error::Kind(_) => 4,
                krp_core::Error::Param(_) => 2,
                _ => 3,
            },
        }
    }
}
