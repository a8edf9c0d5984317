//! Seedable randomness shared by every stochastic stage.
//!
//! All sampling goes through [`SeededRng`], a ChaCha8 stream generator. The
//! algorithm identifier is written into run metadata so a rerun on another
//! machine can confirm it used the same generator.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Identifier recorded in `meta.json` for the generator behind [`SeededRng`].
pub const RNG_ALGORITHM: &str = "chacha8/rand_chacha-0.3";

pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive a sub-seed for a named stage so that stages sharing a run seed do
/// not consume the same random stream.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

/// Pick `amount` distinct indices out of `0..len`, uniformly without
/// replacement, in draw order.
pub fn sample_indices(len: usize, amount: usize, seed: u64) -> Vec<usize> {
    let amount = amount.min(len);
    if amount == 0 {
        return Vec::new();
    }
    let mut rng = rng_from_seed(seed);
    index::sample(&mut rng, len, amount).into_vec()
}

/// SplitMix64 finalizer. A bijection on `u64`, so distinct inputs always give
/// distinct outputs.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Map `mix64` back to its input.
pub fn unmix64(mut z: u64) -> u64 {
    z = unshift_xor(z, 31);
    z = z.wrapping_mul(0x3196_42b2_d24d_8ec3);
    z = unshift_xor(z, 27);
    z = z.wrapping_mul(0x96de_1b17_3f11_9089);
    unshift_xor(z, 30)
}

fn unshift_xor(z: u64, shift: u32) -> u64 {
    let mut x = z;
    let mut i = shift;
    while i < 64 {
        x = z ^ (x >> shift);
        i += shift;
    }
    x
}

/// Stable 64-bit hash of a sequence of byte strings, keyed by `seed`.
pub fn keyed_hash(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}
