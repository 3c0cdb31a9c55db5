//! Deterministic seed derivation.
//!
//! Every random decision in the library draws from a ChaCha stream whose
//! seed is derived from (label, user seed, context ids). Labels separate
//! streams so that, e.g., adding one more training pair never perturbs the
//! evaluation rotations; hashing instance ids (rather than positions)
//! keeps evaluation invariant to dataset ordering.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a hash, used to fold string identifiers into seeds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix an arbitrary list of seed components into one 64-bit value.
pub fn mix(parts: &[u64]) -> u64 {
    let mut h = 0;
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    splitmix64(h)
}

/// Deterministic RNG for a labelled stream.
pub fn stream(label: &str, parts: &[u64]) -> ChaCha8Rng {
    let mut all = Vec::with_capacity(parts.len() + 1);
    all.push(fnv1a(label.as_bytes()));
    all.extend_from_slice(parts);
    ChaCha8Rng::seed_from_u64(mix(&all))
}
