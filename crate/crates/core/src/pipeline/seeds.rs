//! Per-frame seed derivation. Every random decision of the stream is drawn
//! from a generator seeded by `(seed, stage, epoch, index)`, so frames can be
//! produced in any order on any number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Index reserved for epoch-level decisions (scene subsets, batch layout).
pub const PLAN_INDEX: u64 = u64::MAX;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stage: u64, epoch: u64, index: u64) -> u64 {
    [stage, epoch, index]
        .iter()
        .fold(mix(seed), |acc, &x| mix(acc ^ mix(x.wrapping_add(0x9E37_79B9_7F4A_7C15))))
}

pub fn frame_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
