//! Error types shared across the crate.

use thiserror::Error;

/// All failure modes of the library, grouped by contract category.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad parameter values, inconsistent options).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input violates a mathematical precondition (empty stream, zero power, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Array shapes do not line up with the fixed architecture.
    #[error("shape error: {0}")]
    Shape(String),

    /// A computation produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Structural inconsistency in a dataset (duplicate slice indices, mixed labels).
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Bad magic, version, or layout in an artifact file.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: configuration problems exit 2,
    /// everything else exits 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 1,
        }
    }
}
