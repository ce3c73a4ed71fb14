//! Seed derivation.
//!
//! Every random draw comes from a ChaCha20 stream. A trial seed selects the
//! key and a [`Purpose`] selects the stream, so geometry, scheduling and
//! fading of one trial are independent of each other and of every other
//! trial, whatever order the trials run in.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// What a stream is used for. The discriminant is the ChaCha stream id and
/// is part of the reproducibility contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Geometry = 1,
    Assignment = 2,
    Channels = 3,
}

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial` under base seed `base`.
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(base) ^ trial)
}

pub fn stream(seed: u64, purpose: Purpose) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}
