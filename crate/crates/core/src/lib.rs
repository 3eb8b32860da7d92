//! Simulation and verification of alpha-stable continuous-state branching processes.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod closed_forms;
pub mod conditioned;
pub mod error;
pub mod lamperti;
pub mod mc;
pub mod quadrature;
pub mod rng;
pub mod special_functions;
pub mod stable_levy;
pub mod verify;

pub use error::{Error, Result};
pub use stable_levy::{Path, StableParams};
