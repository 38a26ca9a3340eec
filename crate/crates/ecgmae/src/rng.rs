//! Named deterministic random streams.
//!
//! Every random decision in the crate draws from a stream derived from one
//! root seed plus a purpose label (and an index such as the epoch number).
//! Streams are independent, so e.g. changing how many mixup draws happen per
//! epoch cannot shift the shuffle order of the next epoch.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a, fixed here so stream derivation never depends on `std` hasher
/// internals.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// RNG for `(root_seed, purpose, index)`.
pub fn stream(root_seed: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&root_seed.to_le_bytes());
    key[8..16].copy_from_slice(&fnv1a64(purpose.as_bytes()).to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..32].copy_from_slice(&fnv1a64(b"ecgmae.stream").to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a: u64 = stream(7, "shuffle", 0).gen();
        let b: u64 = stream(7, "shuffle", 0).gen();
        assert_eq!(a, b);

        let c: u64 = stream(7, "shuffle", 1).gen();
        let d: u64 = stream(7, "mask", 0).gen();
        let e: u64 = stream(8, "shuffle", 0).gen();
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(a, e);
    }
}
