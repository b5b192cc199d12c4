//! Seed derivation.
//!
//! Every random stream in a study is a ChaCha8 generator seeded from a
//! 64-bit value derived from the master seed by [`mix`]. A stream's seed
//! depends only on its path of indices, never on the order in which other
//! streams were consumed, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN_GAMMA);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives a child seed: `splitmix64(parent ^ splitmix64(index))`.
#[inline]
pub fn mix(parent: u64, index: u64) -> u64 {
    splitmix64(parent ^ splitmix64(index))
}

/// Derives a seed from a path of indices below `master`.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |seed, &i| mix(seed, i))
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(master: u64, path: &[u64]) -> Stream {
    stream(derive(master, path))
}
