//! Seeded RNG streams. Every stochastic step owns its own stream derived from
//! a master seed and a stream label, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `(master, stream)`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn stream(master: u64, stream: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}

pub fn from_seed(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream labels used across the pipeline.
pub mod streams {
    pub const FOLDS: u64 = 1;
    pub const SMOTE: u64 = 2;
    pub const SELECT: u64 = 3;
    pub const ENSEMBLE: u64 = 4;
    pub const BOOSTER: u64 = 5;
    pub const OUTER_FOLD: u64 = 100;
}
