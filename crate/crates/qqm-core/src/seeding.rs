//! Deterministic seed derivation.
//!
//! Every stochastic draw in a run derives its ChaCha seed from the master
//! seed, a purpose tag and an index through SplitMix64, so partial reruns
//! reproduce the full run's prefix exactly.

/// Purpose tags for derived streams.
pub mod tags {
    pub const THETA_INIT: u64 = 1;
    pub const D_REAL_BATCH: u64 = 2;
    pub const D_LATENT_BATCH: u64 = 3;
    pub const G_LATENT_BATCH: u64 = 4;
    pub const SNAPSHOT: u64 = 5;
    pub const SAMPLING: u64 = 6;
}

/// SplitMix64 finalizer over `(seed, tag, index)`.
pub fn derive(seed: u64, tag: u64, index: u64) -> u64 {
    let mut x = seed
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
