//! Causal-graph toolkit for auditing fairness criteria.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod criteria;
pub mod dataset;
pub mod discrete;
pub mod error;
pub mod gaussian;
pub mod graph;
pub mod io;
pub mod scenarios;
pub mod stats;
pub mod surgery;

pub use error::{Error, Result};
