//! Counter-based random streams.
//!
//! A stream is identified by `(seed, stream id)` and positioned by a word
//! counter. The backing generator is ChaCha8, whose keystream is addressed by
//! exactly those three values, so any draw can be replayed without replaying
//! the draws that preceded it on other streams.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reserved stream id for the per-iteration query-index draw shared by all
/// ensemble members.
pub const QUERY_STREAM: u64 = u64::MAX;

/// Stream ids at or above this offset are used by data generators.
pub const DATA_STREAM_BASE: u64 = 1 << 62;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    /// Re-creates a stream positioned at a previously observed counter.
    pub fn at(seed: u64, stream: u64, counter: u128) -> Self {
        let mut s = Self::new(seed, stream);
        s.inner.set_word_pos(counter);
        s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Position in 32-bit words within the keystream.
    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}
