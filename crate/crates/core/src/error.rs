use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
///
/// The variants map one-to-one onto failure classes, and the CLI turns each
/// class into a distinct exit code (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("format error: {0}")]
    Format(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("bounds error: {0}")]
    Bounds(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("non-finite value in loss term `{term}`")]
    Numerical { term: String },

    #[error("checkpoint version mismatch: file has {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("io error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// Short machine-readable class name, used in CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotFound(_) => "not_found",
            Error::Format(_) => "format",
            Error::Shape(_) => "shape",
            Error::Bounds(_) => "bounds",
            Error::Argument(_) => "argument",
            Error::Config(_) => "config",
            Error::Numerical { .. } => "numerical",
            Error::Version { .. } => "version",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit code for this failure class. `1` is reserved for a
    /// signature mismatch reported by `verify`.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) => 2,
            Error::Config(_) => 3,
            Error::NotFound(_) => 4,
            Error::Format(_) => 5,
            Error::Version { .. } => 6,
            Error::Shape(_) => 7,
            Error::Bounds(_) => 8,
            Error::Numerical { .. } => 9,
            Error::Io { .. } => 10,
        }
    }
}
