//! Fluid dynamics and sample-path large-deviation machinery for open
//! multiclass-free queueing networks with autonomous service and feedback
//! routing.
//!
//! The crate is organized around a small number of path types ([`paths`]),
//! a static network description ([`network`]), exact fixed-point solvers for
//! the network flow equations ([`dynamics`]), rate-function evaluation and
//! local variational problems ([`ratefn`]), the tilted approximating-sequence
//! construction ([`approx`]), and Monte Carlo harnesses ([`montecarlo`]).
//!
//! All paths are deterministic, finite-horizon objects; randomness enters
//! only through [`montecarlo`], which is fully reproducible given a seed.

/// Crate version, for embedding in downstream run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod approx;
pub mod dynamics;
mod linalg;
pub mod montecarlo;
pub mod network;
mod opt;
pub mod paths;
pub mod ratefn;

#[doc(hidden)]
pub mod testkit;

use thiserror::Error;

/// Unified error type for construction, validation, and solver failures.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data: bad breakpoint ordering, negative increments,
    /// dimension mismatches, unparsable files.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Input is well-formed but violates a model precondition (spectral
    /// radius, reachability, domain restrictions).
    #[error("validation failed: {0}")]
    Validation(String),
    /// An iterative routine failed to converge or stalled.
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
