//! Seed derivation and deterministic RNG construction.
//!
//! Every stochastic component draws from a ChaCha stream seeded through
//! `derive_seed`, so one master seed fans out into independent,
//! reproducible sub-streams. Results must not depend on thread count,
//! which rules out sharing a single RNG across parallel work: instead
//! each unit of work (scene, tree, window, epoch) derives its own seed
//! from the master plus a stable identifier.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche behavior for cheap seed mixing.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a on UTF-8 bytes, for folding string identifiers into seeds.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derives a child seed from a master seed and a path of components.
///
/// The same (master, parts) pair always yields the same child, and
/// distinct paths yield (with overwhelming probability) distinct
/// children. Order of parts matters.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for p in parts {
        state = splitmix64(state ^ splitmix64(*p));
    }
    state
}

/// ChaCha stream for a derived seed path.
pub fn rng_from(master: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, parts))
}
