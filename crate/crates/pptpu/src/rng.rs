//! Deterministic RNG stream derivation.
//!
//! Every random choice in the pipeline flows from one master seed. A stage
//! (sanitize, subsample, tpu, ...) working on an item (usually a trajectory
//! id) gets its own independent stream derived by hashing
//! `(master, stage, item)`, so the same inputs produce the same outputs
//! bit-for-bit no matter how work is split across threads or CLI invocations.
//!
//! The hash is FNV-1a expanded through SplitMix64. Both are fixed, portable
//! algorithms; `std`'s `DefaultHasher` is deliberately avoided because its
//! output may change between Rust releases.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(init: u64, bytes: &[u8]) -> u64 {
    let mut h = init;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 32-byte seed for the `(master, stage, item)` stream.
pub fn derive_seed(master: u64, stage: &str, item: &[u8]) -> [u8; 32] {
    let mut h = fnv1a(FNV_OFFSET, &master.to_le_bytes());
    h = fnv1a(h, stage.as_bytes());
    h = fnv1a(h, &[0]);
    h = fnv1a(h, item);
    let mut state = h;
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    seed
}

/// Independent RNG stream for `(master, stage, item)`.
pub fn stream(master: u64, stage: &str, item: &[u8]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(master, stage, item))
}

/// Stream for a numbered chunk of a Monte Carlo loop.
pub fn chunk_stream(master: u64, stage: &str, chunk: u64) -> ChaCha8Rng {
    stream(master, stage, &chunk.to_le_bytes())
}
