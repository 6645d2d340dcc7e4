//! Constrained two-player stochastic differential games on Markov
//! regime-switching jump-diffusions.
//!
//! The crate is `no_std` (with `alloc`). It provides exact chain sampling,
//! Kolmogorov and coupled backward ODE solvers, an Euler/log-Euler path
//! simulator with common random numbers, the closed-form Bancassurance
//! equilibrium, and Monte Carlo checks of first-order conditions,
//! Nash/saddle deviations, adjoint processes and Lagrangian constraints.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bancassurance;
pub mod chain;
pub mod error;
pub mod grid;
pub mod jumpdiff;
pub mod kolmogorov;
pub mod lagrange;
pub mod levy;
pub mod linalg;
pub mod numeric;
pub mod runner;
pub mod smp;

pub use error::{Error, Result};

/// Version of this crate, embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
