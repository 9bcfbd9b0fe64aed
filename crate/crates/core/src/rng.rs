//! Deterministic stream derivation.
//!
//! Every stochastic site draws from a ChaCha8 stream whose seed is a
//! stable mix of the run seed and the site's logical coordinates
//! (generation, instance index, step, ...). No global RNG, no entropy.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; a stable 64-bit mixer independent of std's hasher.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold an ordered list of coordinates into one stream seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut acc = 0x51ab_5f1c_c911_35d7u64;
    for &p in parts {
        acc = mix(acc ^ p);
    }
    acc
}

pub fn stream(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parts))
}
