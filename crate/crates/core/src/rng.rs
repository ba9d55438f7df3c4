//! Deterministic seed derivation.
//!
//! Every random decision in the crate flows from one master seed through a
//! named stream plus an index, so independent pipeline stages never share or
//! reorder draws. ChaCha8 is used throughout because its output is specified
//! and stable across platforms and releases.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; a full-period mixer with good avalanche behavior.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a hash of a byte string.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a child seed from `(master, stream, index)`.
///
/// Distinct stream names or indices give statistically independent seeds;
/// the mapping is pure and stable.
pub fn derive_seed(master: u64, stream: &str, index: u64) -> u64 {
    let s = fnv1a(stream.as_bytes());
    splitmix64(splitmix64(master ^ s).wrapping_add(splitmix64(index)))
}

/// 128-bit FNV-1a content fingerprint, lowercase hex.
///
/// Stable across platforms and releases; used to detect config and payload
/// changes, not for security.
pub fn stable_hash_hex(bytes: &[u8]) -> String {
    const OFFSET: u128 = 0x6c62_272e_07bb_0142_62b8_2175_6295_c58d;
    const PRIME: u128 = 0x0000_0000_0100_0000_0000_0000_0000_013b;
    let mut h = OFFSET;
    for &b in bytes {
        h ^= u128::from(b);
        h = h.wrapping_mul(PRIME);
    }
    format!("{h:032x}")
}

/// ChaCha8 generator for `(master, stream, index)`.
pub fn stream_rng(master: u64, stream: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}
