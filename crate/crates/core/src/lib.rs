//! Time-varying and Lagrangian dynamic mode decomposition.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod dmd;
pub mod error;
pub mod experiment;
pub mod lagrangian;
pub mod linalg;
pub mod piecewise;
pub mod snapshots;
pub mod solvers;

pub use error::{Error, Result};
