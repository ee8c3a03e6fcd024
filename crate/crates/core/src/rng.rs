//! Deterministic randomness.
//!
//! Every sampled procedure in the crate draws from a ChaCha8 stream derived
//! from `(master_seed, consumer_key)`. The key scheme: the consumer name is
//! FNV-1a hashed, mixed with the master seed through SplitMix64, and the
//! result seeds the stream. Two consumers with different keys get
//! independent streams; the same `(seed, key)` pair always reproduces the
//! same draws regardless of thread count or call order elsewhere.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Stream for the consumer named `key` under the given master seed.
pub fn stream(master_seed: u64, key: &str) -> ChaCha8Rng {
    let mixed = splitmix64(master_seed ^ fnv1a(key.as_bytes()));
    let mut seed = [0u8; 32];
    let mut state = mixed;
    for chunk in seed.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
