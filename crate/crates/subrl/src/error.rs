//! Crate-wide error type.
//!
//! Three families matter to callers: configuration/input errors (exit code 1
//! in the CLI), numerical failures carrying diagnostics, and explicit size
//! refusals from the exact oracles (exit code 2) — the oracles never silently
//! truncate an enumeration.

use thiserror::Error;

/// Unified error type for the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Mismatched dimensions or invalid construction parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed user input (out-of-range ids, bad files, bad values).
    #[error("input error: {0}")]
    Input(String),

    /// A numerical routine failed (e.g. Cholesky breakdown after jitter).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An exact enumeration would exceed its guard; includes a size report.
    #[error("instance too large for exact computation: {report} (limit {limit} terms)")]
    TooLarge { report: String, limit: u64 },

    /// An internal contract was violated (missing cached data, non-finite
    /// gradients); indicates a bug or an aborted run, not bad user input.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Filesystem or serialization failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// CLI exit code for this error: 2 for size refusals, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::TooLarge { .. } => 2,
            _ => 1,
        }
    }
}
