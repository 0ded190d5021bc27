//! Stable fan-out of one user seed into independent sub-streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes `key` into `seed` with a SplitMix64 finaliser so that nearby keys
/// (epochs, run ids) land on unrelated streams.
pub fn sub_seed(seed: u64, key: u64) -> u64 {
    let mut z = seed ^ key.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, key: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, key))
}

// Sub-stream keys used across the pipelines.
pub const KEY_SPLIT: u64 = 0x5350_4c49_54;
pub const KEY_INIT: u64 = 0x494e_4954;
pub const KEY_VAL_COMM: u64 = 0x5641_4c43;
pub const KEY_EPOCH: u64 = 0x4550_4f43_4800_0000;
pub const KEY_N_AGENTS: u64 = 0x4e41_4745_4e54;
