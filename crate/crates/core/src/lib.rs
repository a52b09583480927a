//! Maximum-likelihood estimation of linearly parameterized Poisson
//! intensities `R_x(t) = g(t) + xᵀγ(t)` from event coordinates or bin
//! counts, together with evaluators for the accompanying error bounds and
//! Monte-Carlo harnesses that check them.

// `!(x > 0.0)` is used deliberately so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod bounds;
pub mod error;
pub mod experiments;
pub mod io;
pub mod likelihood;
pub mod process;
pub mod quad;
pub mod solver;
pub mod stats;

pub use basis::{BasisSpec, Domain, FunctionSpec, GramSummary, PreparedBasis};
pub use error::{Error, Result};

/// Caps the worker threads used by the Monte-Carlo loops. Must be called
/// before any parallel work starts; later calls have no effect.
#[cfg(feature = "parallel")]
pub fn set_parallelism(threads: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .is_ok()
}

#[cfg(not(feature = "parallel"))]
pub fn set_parallelism(_threads: usize) -> bool {
    true
}
