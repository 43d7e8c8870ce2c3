//! Hierarchical mini-batch sampling.
//!
//! Every iteration draws one set of `P` query indices, shared by all
//! members, and each member draws its own `N_b` function indices. Both draws
//! are without replacement. Each draw reads its own fixed window of a
//! counter-based stream, so any iteration can be reproduced in isolation.

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::{RngStream, QUERY_STREAM};

/// 32-bit words reserved per iteration in every stream.
const WORDS_PER_ITERATION: u128 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HierarchicalSampler {
    seed: u64,
    n_functions: usize,
    n_queries: usize,
    batch_functions: usize,
    batch_queries: usize,
}

impl HierarchicalSampler {
    pub fn new(seed: u64, n_functions: usize, n_queries: usize, batch_functions: usize, batch_queries: usize) -> Result<Self> {
        if batch_functions == 0 || batch_functions > n_functions {
            return Err(Error::InvalidConfig(format!(
                "function batch size {batch_functions} must be between 1 and the {n_functions} available pairs"
            )));
        }
        if batch_queries == 0 || batch_queries > n_queries {
            return Err(Error::InvalidConfig(format!(
                "query batch size {batch_queries} must be between 1 and the {n_queries} available query points"
            )));
        }
        Ok(Self {
            seed,
            n_functions,
            n_queries,
            batch_functions,
            batch_queries,
        })
    }

    fn draw(&self, stream: u64, iteration: u64, n: usize, k: usize) -> Vec<usize> {
        if k == n {
            return (0..n).collect();
        }
        let mut rng = RngStream::at(self.seed, stream, iteration as u128 * WORDS_PER_ITERATION);
        index::sample(&mut rng, n, k).into_vec()
    }

    /// Query indices shared by every member at `iteration`.
    pub fn query_indices(&self, iteration: u64) -> Vec<usize> {
        self.draw(QUERY_STREAM, iteration, self.n_queries, self.batch_queries)
    }

    /// Function indices for the member with batch stream `member` at `iteration`.
    pub fn function_indices(&self, member: u64, iteration: u64) -> Vec<usize> {
        self.draw(member, iteration, self.n_functions, self.batch_functions)
    }

    pub fn batch_functions(&self) -> usize {
        self.batch_functions
    }

    pub fn batch_queries(&self) -> usize {
        self.batch_queries
    }
}
