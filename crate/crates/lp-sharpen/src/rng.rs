//! Deterministic RNG derivation.
//!
//! Every randomized routine takes a `u64` seed. Parallel replicates each own
//! a child generator derived from `(seed, index)`, so results are identical
//! regardless of execution order or thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 step; used to expand (seed, index) into a 32-byte ChaCha key.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child generator for replicate `index` of a run seeded with `seed`.
pub fn child_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ index.wrapping_mul(0xa076_1d64_78bd_642f);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Top-level generator for a seeded run.
pub fn root_rng(seed: u64) -> ChaCha8Rng {
    child_rng(seed, u64::MAX)
}
