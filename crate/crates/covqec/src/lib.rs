//! Numerical toolkit for approximate continuous symmetries in quantum error
//! correcting codes.
//!
//! The crate computes covariance-violation measures (global, point-local and
//! charge-based), the QEC inaccuracy of a code under noise, the channel
//! quantities `j_min` and `f_reg` entering the symmetry/QEC trade-off bounds,
//! and evaluates those bounds numerically. Code families included: quantum
//! Reed-Muller codes, a tunable thermodynamic code family in the
//! permutation-symmetric subspace, trivial encodings and user-supplied
//! isometries.

pub mod bounds;
pub mod channels;
pub mod codes;
pub mod convex;
pub mod measures;
pub mod tensor;

mod error;
pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
