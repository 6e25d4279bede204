//! Slow, obviously-correct reference implementations used to cross-check the
//! optimized code, plus seeded random input generators.

pub mod dense;
pub mod detection;
pub mod search;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
