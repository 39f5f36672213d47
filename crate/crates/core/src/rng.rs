//! Seed derivation and the crate-wide RNG.
//!
//! All stochastic code uses ChaCha8 seeded through [`derive_seed`], so every
//! consumer (data generation, weight init, per-epoch shuffles) draws from its
//! own independent, reproducible stream. ChaCha output is stable across
//! platforms and crate versions, unlike `StdRng`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mix a base seed with a stream label into a fresh 64-bit seed.
///
/// FNV-1a over the label bytes, then two splitmix64 finalization rounds to
/// spread low-entropy inputs (consecutive epochs, short labels) across the
/// whole word.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x1000_0000_01b3;
    let mut h = FNV_OFFSET ^ base;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(splitmix64(h))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG for a named stream of a base seed.
pub fn stream_rng(base: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, label))
}
