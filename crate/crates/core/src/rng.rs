//! Counter-based random streams.
//!
//! Every draw is a pure function of `(key, index)`: the generator for index
//! `k` is seeded by hashing the pair, so windows of indices can be sampled in
//! any order, on any thread, and overlapping windows agree draw for draw.
//! Within one index the stream is SplitMix64.

use rand_core::RngCore;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer (Stafford's variant 13). A bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A keyed family of independent per-index streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { key: mix64(seed ^ 0x6a09_e667_f3bc_c908) }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Derives an independent family, e.g. one per replicate or per horizon.
    pub fn fork(&self, tag: u64) -> Self {
        Self {
            key: mix64(self.key ^ mix64(tag.wrapping_add(GOLDEN))),
        }
    }

    /// The stream attached to `index`.
    #[inline]
    pub fn at(&self, index: i64) -> IndexRng {
        IndexRng {
            state: mix64(self.key ^ mix64((index as u64).wrapping_mul(GOLDEN) ^ 0xd1b5_4a32_d192_ed03)),
        }
    }
}

/// SplitMix64 stream for a single index.
#[derive(Debug, Clone)]
pub struct IndexRng {
    state: u64,
}

impl IndexRng {
    /// Uniform in `(0, 1]`, never zero, so it is safe under `ln` and negative powers.
    #[inline]
    pub fn open_unit(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound` by multiply-shift.
    #[inline]
    pub fn below(&mut self, bound: u64) -> u64 {
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }
}

impl RngCore for IndexRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        rand_core::impls::fill_bytes_via_next(self, dst)
    }
}
