//! Seeded randomness.
//!
//! Every stage draws from its own ChaCha stream whose seed is derived from the
//! master seed and a stage label, so re-running one stage does not shift the
//! random numbers seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StageRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for `label` under `master` (FNV-1a of the label, mixed with
/// SplitMix64).
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(master ^ splitmix64(h))
}

pub fn stage_rng(master: u64, label: &str) -> StageRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label))
}

pub fn seeded(seed: u64) -> StageRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn standard_normal(rng: &mut StageRng) -> f64 {
    StandardNormal.sample(rng)
}
