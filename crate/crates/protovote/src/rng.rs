//! Deterministic random-stream derivation.
//!
//! Every randomized operation in this crate draws from a ChaCha8 stream
//! derived from `(master_seed, label, index)`. ChaCha is counter-based, so
//! identical seeds reproduce identical values on every platform regardless
//! of thread count, and independent `(label, index)` pairs give independent
//! streams that can be consumed in parallel.
//!
//! Derivation: the 32-byte ChaCha seed is four SplitMix64 outputs of a state
//! initialized to `master_seed ^ fnv1a64(label) ^ (index * 0x9E3779B97F4A7C15)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the ChaCha8 stream for `(master_seed, label, index)`.
pub fn stream(master_seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut state = master_seed ^ fnv1a64(label.as_bytes()) ^ index.wrapping_mul(GOLDEN_GAMMA);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
