//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Configuration file or field is invalid (CLI exit code 2).
    #[error("config error: {0}")]
    Config(String),

    /// An argument violates a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// Operand dimensions are inconsistent or unsupported.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A numerical routine left its validity envelope (lost positive
    /// definiteness, disagreeing factorizations, divergent iteration, ...).
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code the CLI uses for this error: 2 for configuration
    /// problems, 3 for everything that goes wrong at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
