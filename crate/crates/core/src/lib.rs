//! Gaussian-likelihood score gaps for causal direction problems.
//!
//! The crate computes, for bivariate additive-noise models and linear SEMs,
//! how much better (or worse) the anti-causal model scores than the causal
//! one under a Gaussian likelihood with flexible regression:
//!
//! * [`population`]: exact and quadrature values of the gap Δ and exp(Δ)²;
//! * [`scoring`]: the same quantities estimated from samples, plus
//!   permutation scores for linear SEMs;
//! * [`hsic`]: the independence-test comparator;
//! * [`pairs`]: loading and preprocessing cause-effect pair files.

// `!(a < b)` is used deliberately so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
// Quadrature nodes are kept at their published precision.
#![allow(clippy::excessive_precision)]

pub mod cli;
pub mod error;
pub mod hsic;
pub mod npreg;
pub mod pairs;
pub mod population;
pub mod quadrature;
pub mod rng;
pub mod scoring;
pub mod sem;
pub mod specfun;

pub use error::{Error, Result};
