//! Stream-seed derivation. Every random draw in the crate comes from a ChaCha
//! stream keyed by the run seed plus a fixed per-purpose offset.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SYNTH: u64 = 1;
pub const SPLIT: u64 = 2;
pub const SAMPLE: u64 = 3;
pub const INIT: u64 = 4;
/// Epoch `e` shuffles with offset `SHUFFLE + e`.
pub const SHUFFLE: u64 = 1 << 32;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn derive(seed: u64, offset: u64) -> u64 {
    seed.wrapping_add(offset.wrapping_mul(GOLDEN))
}

pub fn stream(seed: u64, offset: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, offset))
}
