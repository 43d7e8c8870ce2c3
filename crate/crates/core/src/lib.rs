//! Randomized-prior DeepONet ensembles for operator learning with
//! uncertainty estimates, plus the synthetic benchmarks used to exercise them.

pub mod bench;
pub mod config;
pub mod data;
pub mod ensemble;
pub mod error;
mod io;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;

pub use error::{Error, ErrorKind, Result};
