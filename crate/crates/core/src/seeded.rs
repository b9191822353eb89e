//! Stable seed derivation. All randomness in a run is a pure function of the
//! run seed plus string context (scenario id, stage, turn), so concurrency
//! and scheduling order can never change an outcome.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the parts with a separator byte between them. Stable across
/// platforms and releases, unlike the std hasher.
pub fn stable_hash64(seed: u64, parts: &[&str]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET ^ seed.wrapping_mul(PRIME);
    for part in parts {
        for b in part.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(PRIME);
        }
        h ^= 0x1f;
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// A small fast RNG keyed by the run seed and a string context.
pub fn derive_rng(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stable_hash64(seed, parts))
}
