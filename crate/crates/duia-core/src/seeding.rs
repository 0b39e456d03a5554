//! Deterministic seed derivation. Every randomized component draws from its
//! own stream derived from the master seed and a tag, so adding or removing a
//! component never shifts another component's randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    let mut h = 0xCBF2_9CE4_8422_2325u64;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

pub fn derive_seed(master: u64, tag: &str) -> u64 {
    mix(master ^ fnv1a(tag))
}

/// A reproducible generator for the given component tag.
pub fn component_rng(master: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag))
}

/// Stateless hash of `(seed, a, b)` to a uniform value in `[0, 1)`. Used for
/// per-event sampling decisions that must not depend on iteration order.
pub fn unit_hash(seed: u64, a: u64, b: u64) -> f64 {
    let h = mix(mix(seed ^ a).wrapping_add(b));
    // Top 53 bits -> [0, 1).
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
