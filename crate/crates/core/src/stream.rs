//! Seeded random streams.
//!
//! Every random decision in the crate draws from a [`Stream`] derived from a
//! master seed and a path of indices (trial, candidate order, ...). The
//! generator is ChaCha8, which is portable and reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a path of indices into a new 64-bit seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(1))))
}

/// Independent stream for `(seed, path...)`.
pub fn derive_stream(seed: u64, path: &[u64]) -> Stream {
    Stream::seed_from_u64(derive_seed(seed, path))
}
