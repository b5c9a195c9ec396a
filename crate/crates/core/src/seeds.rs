//! Counter-based seed derivation.
//!
//! Every random stream in the pipeline is keyed by `(master_seed, stream_tag,
//! counters...)`, so parallel jobs draw from independent streams and results
//! never depend on scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tag for training-pair synthesis.
pub const STREAM_SYNTH: u64 = 1;
/// Stream tag for network weight init and patch sampling.
pub const STREAM_TRAIN: u64 = 2;
/// Stream tag for held-out case synthesis.
pub const STREAM_HOLDOUT: u64 = 3;
/// Stream tag for phantom generation.
pub const STREAM_PHANTOM: u64 = 4;

/// Mix a base seed with two counters into a derived 64-bit seed.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15u64;
    h ^= a.wrapping_mul(0xC2B2_AE3D_27D4_EB4Fu64);
    h = h.rotate_left(27) ^ (h >> 33);
    h ^= b.wrapping_mul(0x1656_67B1_9E37_79F9u64);
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCDu64);
    h ^ (h >> 29)
}

/// Deterministic generator for a derived seed.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
