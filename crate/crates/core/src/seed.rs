//! Seed derivation.
//!
//! Every random stream in an experiment is keyed by a tuple of integers
//! (master seed, purpose tag, client id, round, ...) so results do not depend
//! on the order in which workers happen to run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

pub const TAG_DATA: u64 = 1;
pub const TAG_PARTITION: u64 = 2;
pub const TAG_POISON: u64 = 3;
pub const TAG_INIT: u64 = 4;
pub const TAG_PROBE: u64 = 5;
pub const TAG_TRAIN: u64 = 6;
pub const TAG_SWEEP: u64 = 7;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes an ordered list of integers into a single seed.
pub fn derive(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5851_F42D_4C95_7F2D, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(parts: &[u64]) -> Rng {
    rng(derive(parts))
}
