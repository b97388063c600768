//! Seeded random streams.
//!
//! Every randomized operation takes an explicit seed. Streams for independent
//! tasks are keyed with SplitMix64 so that parallel generation never shares a
//! generator.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// The generator used throughout the crate.
pub type Rng = Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 output for state `x`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of key words into one 64-bit stream key.
pub fn mix_keys(keys: &[u64]) -> u64 {
    keys.iter()
        .fold(0u64, |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// A generator seeded from a single 64-bit value.
pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// A generator for the stream identified by `keys`.
pub fn keyed_rng(keys: &[u64]) -> Rng {
    rng_from_seed(mix_keys(keys))
}

/// Stable 64-bit key for a string (first eight bytes of its SHA-256).
pub fn string_key(s: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(s.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
