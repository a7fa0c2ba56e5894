//! Crate-wide error type and exit-code mapping for the CLI.

use thiserror::Error;

/// Errors surfaced by the library and the command-line pipelines.
///
/// The CLI maps these onto process exit codes: anything that stems from bad
/// input (files, configs, circuits, dimension mismatches) exits with 1,
/// anything that stems from a numerical breakdown exits with 2.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data failed validation (malformed file, bad parameter range,
    /// inconsistent circuit, dimension mismatch, unknown gate, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A numerical routine failed to produce a trustworthy result
    /// (non-finite values, eigensolver breakdown, SDP non-convergence).
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 for validation problems, 2 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 2,
            _ => 1,
        }
    }
}
