//! Deterministic seed derivation for parallel work units.
//!
//! Every randomized stage (observation, chain, replication) owns a seed
//! derived from its parent seed and its index, so results are identical
//! under any parallel schedule.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives a child seed from a master seed and a work-unit index.
///
/// Uses the splitmix64 finalizer over `master ^ golden * (index + 1)`;
/// distinct `(master, index)` pairs map to well-separated streams.
pub fn derive(master: u64, index: u64) -> u64 {
    let mut z = master ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Builds the stream RNG for a derived seed.
pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
