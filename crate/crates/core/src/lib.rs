//! Strategic state explanations for stochastic policies.

pub mod env;
pub mod error;
pub mod evalharness;
pub mod explain;
pub mod metastates;
pub mod pathgraph;
pub mod policy;
pub mod strategic;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
