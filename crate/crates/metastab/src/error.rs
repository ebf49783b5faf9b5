//! Error taxonomy: invalid input vs. numerical guards.
//!
//! `Validation` marks requests that are malformed or out of contract
//! (unknown model names, inconsistent dimensions, non-Hermitian input where
//! Hermiticity is required). `Numerical` marks runs that were set up
//! correctly but tripped a runtime guard (dense dimension caps, eigensolver
//! non-convergence, quadrature tolerances). The CLI maps them to distinct
//! exit codes so drivers can tell "fix the config" from "shrink the problem".

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-contract input.
    #[error("validation: {0}")]
    Validation(String),
    /// A numerical guard tripped (size caps, non-convergence, tolerance).
    #[error("numerical: {0}")]
    Numerical(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
