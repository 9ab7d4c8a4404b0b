//! Seed derivation.
//!
//! Every random stream in a simulation is keyed by a path of integers
//! (master seed, trial, chain, purpose). Keys are mixed with SplitMix64 and
//! fed to ChaCha8, so streams are independent of evaluation order and of the
//! number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes used below a chain or trial key.
pub mod purpose {
    pub const OSCILLATOR: u64 = 1;
    pub const RECEIVER_NOISE: u64 = 2;
    pub const STEERING: u64 = 3;
    pub const VCO_PATH: u64 = 10;
    pub const REF_PATH: u64 = 11;
    pub const WHITE_OFFSET: u64 = 12;
    pub const WHITE_NOISE: u64 = 13;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a path of labels.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &label| splitmix64(acc ^ splitmix64(label.wrapping_add(0x5851_f42d))))
}

pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, path))
}
