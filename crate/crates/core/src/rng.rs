//! Seed derivation for reproducible parallel experiments.
//!
//! Every independent unit of work (a repeat, a trial) gets its own ChaCha
//! stream keyed by the master seed and the unit index, so results do not depend
//! on scheduling order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn master(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Generator for unit `index` under `seed`. Distinct indices give independent streams.
pub fn for_unit(seed: u64, index: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Deterministic 64-bit child seed, for APIs that take a seed rather than a generator.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
