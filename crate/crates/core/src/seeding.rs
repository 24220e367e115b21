//! Deterministic seed derivation.
//!
//! Every random operation in the toolkit draws from a [`ChaCha8Rng`] whose
//! seed is derived from a caller-supplied master seed and a purpose tag.
//! Distinct tags give statistically independent streams, so replicate loops
//! can run in parallel (each replicate owns its sub-stream) while staying
//! byte-reproducible regardless of thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keeping the derived streams disjoint. The values are
/// arbitrary but frozen: changing them changes every downstream sample.
pub mod tags {
    pub const GENERATE: u64 = 0x01;
    pub const SPLIT: u64 = 0x02;
    pub const DOWNSAMPLE: u64 = 0x03;
    pub const ORACLE: u64 = 0x04;
    pub const PROPENSITY: u64 = 0x05;
    pub const TRAIN_IPS: u64 = 0x06;
    pub const TRAIN_DM: u64 = 0x07;
    pub const DIAGNOSTICS: u64 = 0x08;
    pub const PROTOCOL: u64 = 0x09;
}

/// SplitMix64 output function; a strong 64-bit mixer.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a purpose tag.
pub fn mix(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

/// Derives a child seed from a master seed, a purpose tag and an index
/// (replicate number, split number, ...).
pub fn mix_indexed(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(mix(seed, tag) ^ splitmix64(index.wrapping_add(0xA5A5_A5A5)))
}

/// A reproducible generator for the given seed and purpose tag.
pub fn rng(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, tag))
}

/// A reproducible generator for the given seed, purpose tag and index.
pub fn rng_indexed(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_indexed(seed, tag, index))
}

/// FNV-1a 64-bit hash; used to digest configurations into provenance tags.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}
