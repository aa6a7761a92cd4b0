//! Seeded random streams.
//!
//! All randomness flows from a user seed through [`stream`], which picks an
//! independent ChaCha stream per (purpose, index) pair.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream purposes.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Purpose {
    Data = 1,
    Split = 2,
    Batches = 3,
    Params = 4,
    Sim = 5,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) ^ index);
    rng
}

/// Seed for the `index`-th independent sub-run of a run seeded with `seed`.
/// Index 0 maps to `seed` itself.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}
