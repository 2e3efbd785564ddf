//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` keyed by a 64-bit seed
//! derived from a master seed with [`derive`]. Tree branches, episodes and
//! replications each get their own stream, so results do not depend on
//! evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a stream label.
#[inline]
pub fn derive(parent: u64, label: u64) -> u64 {
    mix64(parent ^ mix64(label.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn derive_all(parent: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(parent, |acc, &l| derive(acc, l))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream labels used across the crate.
pub mod stream {
    pub const ROOT_BELIEF: u64 = 1;
    pub const SOLVER: u64 = 2;
    pub const BRANCH: u64 = 3;
    pub const EPISODE: u64 = 4;
    pub const RESPONDER: u64 = 5;
    pub const EVALUATION: u64 = 6;
    pub const MARGINAL: u64 = 7;
}
