//! Seed derivation for reproducible generation.
//!
//! Every random stream in the pipeline is a ChaCha8 generator keyed by a
//! 64-bit seed mixed from a master seed and a small tuple of counters, so
//! results never depend on iteration or thread order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with a sequence of counters.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(base), |h, &p| mix(h ^ mix(p)))
}

/// Stable 64-bit hash of a short label, used to fold names into seeds.
pub fn label_seed(label: &str) -> u64 {
    // FNV-1a
    label
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01B3))
}

pub fn rng_from(base: u64, parts: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(base, parts))
}
