//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! user seed plus a stream id, so results are reproducible across platforms
//! and independent of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids used by the library. Bootstrap replicates use
/// `BOOTSTRAP_BASE + b`.
pub mod stream {
    pub const PAIR_SAMPLER: u64 = 1;
    pub const VALIDATION_SPLIT: u64 = 2;
    pub const EIGEN_START: u64 = 3;
    pub const SIMULATION: u64 = 4;
    pub const BOOTSTRAP_BASE: u64 = 1 << 32;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes `(seed, index)` into a new 64-bit seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
