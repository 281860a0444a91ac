//! Stateless per-path seed derivation and the random streams built on it.
//!
//! Every path `i` of an ensemble gets `derive_seed(master, i)`. The seed feeds
//! a ChaCha8 generator; independent quantities drawn for the same path (the
//! trajectory and the stopping threshold) live on distinct ChaCha streams of
//! that seed, so they never share randomness and neither depends on the order
//! in which workers visit path indices.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Stream namespaces within a per-path seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Path = 1,
    Threshold = 2,
}

impl Stream {
    pub fn name(self) -> &'static str {
        match self {
            Stream::Path => "path",
            Stream::Threshold => "threshold",
        }
    }
}

/// SplitMix64 finalizer. A bijection on `u64` with full avalanche.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `(master, index)` into a path seed.
///
/// For a fixed master the map `index -> seed` is injective: `index * GAMMA`
/// is a bijection mod 2^64 (odd multiplier) and `mix64` is a bijection.
#[inline]
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master).wrapping_add(index.wrapping_mul(GOLDEN_GAMMA)))
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Uniform draw on the open interval (0, 1) with 53 bits of resolution.
#[inline]
pub fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}
