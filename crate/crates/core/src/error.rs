//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by model construction, solvers, and schemes.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Structurally invalid input (asymmetric matrix, label out of range, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A seed request that cannot be satisfied by the block structure.
    #[error("infeasible seed selection: {0}")]
    InfeasibleSeeds(String),

    /// A probability entry of exactly 0 or 1 reached a logit with clamping
    /// disabled.
    #[error("probability {value} is outside the open interval (0,1) and clamping is disabled")]
    ProbabilityRange { value: f64 },

    /// An exhaustive enumeration would exceed its guard.
    #[error("enumeration of {size} assignments exceeds the guard of {limit}")]
    EnumerationGuard { size: u128, limit: u128 },

    /// A brute-force oracle was asked for an instance above its size cap.
    #[error("instance too large: {0}")]
    TooLarge(String),

    /// An operation has no meaningful answer for the given instance.
    #[error("degenerate instance: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
