//! Deterministic RNG stream derivation.
//!
//! Every random quantity is drawn from a ChaCha8 stream whose key is derived
//! from a root seed and a path of tags, e.g. `(seed, trial, terminal)`. Results
//! therefore do not depend on scheduling order across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a root seed with a tag path into a single 64-bit seed.
pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(root), |acc, &t| splitmix64(acc ^ splitmix64(t.wrapping_add(0x51_7CC1_B727_220A))))
}

/// Independent stream for `(root, tags...)`.
pub fn stream(root: u64, tags: &[u64]) -> StreamRng {
    let s = derive_seed(root, tags);
    let mut key = [0u8; 32];
    let mut x = s;
    for chunk in key.chunks_mut(8) {
        x = splitmix64(x);
        chunk.copy_from_slice(&x.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

// Tag namespaces keep unrelated consumers of one root seed apart.
pub const TAG_TRIAL: u64 = 1;
pub const TAG_TERMINAL: u64 = 2;
pub const TAG_PUBLIC: u64 = 3;
pub const TAG_TRUTH: u64 = 4;
pub const TAG_TUPLE: u64 = 5;
