//! Crate-wide error type for fallible, API-level operations.
//!
//! Contract violations inside the tensor/tape math (shape mismatches,
//! non-scalar losses) are programming errors and panic with a message
//! instead; everything that can fail because of user input, files, or
//! runtime state goes through [`MraError`].

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MraError {
    /// A caller broke an operation's precondition (bad action index,
    /// stepping past the horizon, population mismatch, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The replay buffer does not yet hold enough samples.
    #[error("not ready: {0}")]
    NotReady(String),

    /// Input exceeds the oracle's enumerable scope.
    #[error("out of oracle scope: {0}")]
    Scope(String),

    /// Grid search found no approximate equilibrium at the requested
    /// resolution/tolerance.
    #[error("resolution too coarse: {0}")]
    Resolution(String),

    /// Config or game file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A pipeline produced a non-finite loss; the run is aborted.
    #[error("non-finite value in {0}; diagnostic dump at {1}")]
    NonFinite(String, String),
}

pub type Result<T> = std::result::Result<T, MraError>;
