//! Deterministic seed derivation.
//!
//! Every randomized component in the crate is driven by a ChaCha stream
//! seeded through these helpers, so a run is reproducible from a single
//! global seed and results are independent of worker scheduling: each
//! example, round, and run gets its own stream derived from stable inputs
//! rather than from a shared mutable generator.

/// SplitMix64 finalizer. Good avalanche behavior, stable across platforms.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over a byte string; used to fold example ids into seeds.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a child seed from a base seed and an integer salt.
pub fn mix(base: u64, salt: u64) -> u64 {
    splitmix64(base ^ splitmix64(salt))
}

/// Derive a per-example seed from a base seed and the example's id.
///
/// The result depends only on `(base, id)`, never on pool order, so
/// per-example work can fan out across threads and still reproduce.
pub fn for_id(base: u64, id: &str) -> u64 {
    splitmix64(base ^ fnv1a64(id.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_is_deterministic_and_spreads() {
        assert_eq!(mix(42, 7), mix(42, 7));
        assert_ne!(mix(42, 7), mix(42, 8));
        assert_ne!(mix(42, 7), mix(43, 7));
    }

    #[test]
    fn for_id_depends_on_id_not_order() {
        let a = for_id(1, "ex-0001");
        let b = for_id(1, "ex-0002");
        assert_ne!(a, b);
        assert_eq!(a, for_id(1, "ex-0001"));
    }
}
