//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the solver, the verifier, and scenario ingestion.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation
    /// (time outside the trading day, negative inversion target, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested computation is mis-specified (too few agents,
    /// non-finite targets, non-positive cost proportion, out-of-range
    /// grid or sweep parameters, ...).
    #[error("invalid specification: {0}")]
    Spec(String),

    /// A scenario file failed schema validation. `pointer` is a JSON
    /// pointer (RFC 6901) to the offending element.
    #[error("scenario error at {pointer}: {message}")]
    Scenario { pointer: String, message: String },

    /// An internal invariant that the construction guarantees was violated;
    /// this always indicates a bug upstream, never bad user input.
    #[error("internal consistency violation: {0}")]
    Internal(String),

    /// The requested operation is not defined for the given model
    /// (for example drift slopes under a non-differentiable trajectory).
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// An iterative routine hit its iteration cap before reaching the
    /// requested tolerance.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
