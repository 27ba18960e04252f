use thiserror::Error;

use crate::state::AllocationError;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument is out of its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The configuration file or the assembled configuration is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// A policy emitted an allocation that violates the per-frame constraints.
    #[error("policy produced an invalid allocation at frame {frame}: {violation}")]
    Allocation {
        frame: u64,
        #[source]
        violation: AllocationError,
    },

    /// The randomized reservation policy cannot be laid out for this arrival matrix.
    #[error("arrival matrix is outside the guaranteed-feasible region: {0}")]
    Infeasible(String),

    /// A function was called outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Exhaustive enumeration refused because the search space is too large.
    #[error("search space of {size:.3e} count vectors exceeds the limit of {limit:.3e}")]
    SearchSpace { size: f64, limit: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
