//! Uncertainty-aware policy optimization for cell-culture digital twins.
//!
//! The crate is `no_std` with `alloc`. It provides the MDP primitives, a
//! calibrated Gaussian transition model, the cell-culture kinetic emulator,
//! maximum-likelihood calibration, model-uncertainty estimation, value-based
//! policy optimization and the baseline selectors.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod baselines;
pub mod calibration;
pub mod dual;
pub mod error;
pub mod kinetics;
pub mod math;
pub mod mdp;
pub mod model;
pub mod policy_opt;
pub mod uncertainty;

pub use error::{Error, Result};
