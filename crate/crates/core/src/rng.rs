//! Seed derivation for reproducible sub-streams.
//!
//! Every randomized stage (weight init, epoch shuffles, per-sample synthesis,
//! fold planning) draws from its own ChaCha stream whose seed is derived from
//! the experiment seed plus a role tag. Derivation is a fixed integer mix, so
//! results do not depend on platform hashers or scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Mix a base seed with a role tag and an index into a new seed.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut h = splitmix64(base);
    for b in tag.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ index)
}

/// Deterministic generator for the given derived seed.
pub fn seeded_rng(base: u64, tag: &str, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(base, tag, index))
}
