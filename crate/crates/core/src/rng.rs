//! Seed derivation for reproducible experiments.
//!
//! Every trial gets its own `ChaCha8Rng`, seeded by mixing the master seed
//! with the coordinates of the trial (parameter values, not grid positions),
//! so a sweep can be re-partitioned or re-ordered without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrialRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `master` one word at a time.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(master), |acc, &p| {
        splitmix64(acc ^ splitmix64(p))
    })
}

/// Seed word for a real-valued coordinate (bit pattern, so 0.5 and 0.50 agree).
pub fn coord(x: f64) -> u64 {
    x.to_bits()
}

pub fn rng_from_seed(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}
