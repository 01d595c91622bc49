//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator whose 64-bit seed is derived from a
//! master seed and a label path with SplitMix64 mixing, so a given
//! (seed, labels) pair yields the same stream on every platform and under
//! any thread schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Algorithm identifier recorded in reports.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng(rand_chacha 0.9) seeded via SplitMix64 label derivation";

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes an integer label into a seed.
pub fn derive(seed: u64, label: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ label.rotate_left(17) ^ 0xD6E8_FEB8_6659_FD93)
}

/// Mixes a string label into a seed (FNV-1a over the bytes first).
pub fn derive_str(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    derive(seed, h)
}

pub fn stream(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
