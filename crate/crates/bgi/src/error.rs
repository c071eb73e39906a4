//! Crate-wide error type.
//!
//! Errors are grouped by how a batch front end should react to them:
//! [`Error::Io`], [`Error::Parse`] and [`Error::Contract`] are usage or
//! input problems (CLI exit code 2), while [`Error::Numerical`] marks a
//! failure inside a fit or a downstream computation (exit code 1).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input files. The message names the offending row/column.
    #[error("parse error: {0}")]
    Parse(String),

    /// A caller broke a documented precondition (dimension mismatch,
    /// invalid hyperparameter, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Numerical failure during fitting or post-processing.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Process exit code used by the CLI: 1 for numerical failures,
    /// 2 for usage and I/O problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
