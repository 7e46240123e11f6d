//! Steady-state distribution grid simulation for estimating the aggregated
//! flexibility area at a TSO-DSO interconnection by power-flow sampling,
//! and for measuring how limited observability distorts that estimate.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod grid;
pub mod observability;
pub mod powerflow;
pub mod runner;
pub mod sampler;

pub use error::{Error, Result};
