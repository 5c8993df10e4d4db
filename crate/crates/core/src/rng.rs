//! Portable seeded randomness.
//!
//! Every random draw in the crate goes through xoshiro256** seeded by
//! SplitMix64 expansion of a `u64` seed, with the conversions below, so that
//! an independent implementation can reproduce walks and instances exactly:
//!
//! * unit double: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`;
//! * symmetric double: `2 u - 1`, in `[-1, 1)`;
//! * index below `k`: high 64 bits of `next_u64 * k` (multiply-shift).

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

pub type Rng = Xoshiro256StarStar;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Seed for sub-stream `stream` of `seed`, via the SplitMix64 finalizer.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn unit_f64(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn symmetric_f64(rng: &mut Rng) -> f64 {
    2.0 * unit_f64(rng) - 1.0
}

pub fn index_below(rng: &mut Rng, k: usize) -> usize {
    debug_assert!(k > 0);
    ((u128::from(rng.next_u64()) * k as u128) >> 64) as usize
}
