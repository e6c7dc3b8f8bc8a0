//! Neural flow surrogates with exact y-periodicity for deterministic lateral
//! displacement (DLD) unit cells.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod metrics;
pub mod neural;
pub mod surrogate;
pub mod tracer;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
