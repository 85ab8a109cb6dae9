//! The one random source used for sampling and generation.
//!
//! ChaCha8 seeded through `SeedableRng::seed_from_u64`; integer ranges are
//! drawn as `u64` so index sequences match across pointer widths.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Recorded in JSON output next to every seed.
pub const PRNG_NAME: &str = "chacha8 (rand_chacha 0.3, seed_from_u64)";

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
