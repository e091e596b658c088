//! Stage-local RNG derivation.
//!
//! Every random stage of the pipeline (negative sampling, embedding init,
//! tuning, ...) draws its seed from a single top-level seed combined with a
//! stable stage name. The hash is hand-rolled (FNV-1a + splitmix64 finisher)
//! so derived seeds never depend on `std` hasher internals, which are not
//! stable across releases.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a deterministic child seed for a named pipeline stage.
pub fn stage_seed(root: u64, stage: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in root.to_le_bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(PRIME);
    }
    for b in stage.as_bytes() {
        h = (h ^ u64::from(*b)).wrapping_mul(PRIME);
    }
    // splitmix64 finisher for avalanche on short inputs
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded RNG for a named stage.
pub fn stage_rng(root: u64, stage: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stage_seed(root, stage))
}
