//! Deterministic random streams.
//!
//! Every unit of stochastic work (a replicate, one imputation, a calibration
//! pool) draws from its own ChaCha stream whose seed is a hash of a master
//! seed and a path of integer identifiers. Streams never share state, so
//! results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `path` into `master`, producing a well-mixed 64-bit key.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = master;
    let mut acc = splitmix64(&mut state);
    for &id in path {
        state ^= acc.rotate_left(17) ^ id;
        acc = splitmix64(&mut state);
    }
    acc
}

/// Independent stream for `(master, path...)`.
pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    let mut state = derive_seed(master, path);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Stream domain tags, so that e.g. replicate 3 and imputation 3 never collide.
pub mod tag {
    pub const DATA: u64 = 0x4441_5441;
    pub const IMPUTE: u64 = 0x494d_5055;
    pub const CALIBRATE: u64 = 0x4341_4c49;
    pub const ARM: u64 = 0x4152_4d00;
}
