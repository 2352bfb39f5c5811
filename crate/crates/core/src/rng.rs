//! Seed derivation for independent, reproducible random streams.
//!
//! Streams are derived by hashing `(seed, index)` with the SplitMix64
//! finalizer, so stream `i` can be regenerated without touching any other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `index` of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let keyed = mix64(seed.wrapping_add(GOLDEN_GAMMA));
    mix64(keyed ^ index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
