//! Seeding conventions.
//!
//! Every random stream is a ChaCha8 generator keyed by a 64-bit seed and a
//! stream number, which gives identical sequences on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for `stream` under `seed`. Distinct streams never overlap.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Streams used inside a single run.
pub mod purpose {
    pub const SPLIT: u64 = 1;
    pub const AMPUTE_TRAIN: u64 = 2;
    pub const AMPUTE_TEST: u64 = 3;
    pub const INIT: u64 = 4;
    pub const TRAIN: u64 = 5;
    pub const IMPUTE: u64 = 6;
    pub const VALIDATION: u64 = 7;
}

/// Seed of run `run_index` under `master_seed` (splitmix64 finalizer over the pair).
pub fn run_seed(master_seed: u64, run_index: u64) -> u64 {
    let mut z = master_seed
        .wrapping_add(run_index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed for one `purpose` inside the run seeded by `seed`.
pub fn purpose_seed(seed: u64, purpose: u64) -> u64 {
    run_seed(seed, purpose.wrapping_add(0x5EED_0000))
}
