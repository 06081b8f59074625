//! Portable seeded randomness.
//!
//! All experiment paths draw from ChaCha8 (`rand_chacha::ChaCha8Rng`), a
//! counter-based generator whose output is specified bit-for-bit and identical
//! on every platform. A `(seed, stream)` pair selects an independent sequence:
//! the seed is expanded with `SeedableRng::seed_from_u64` and the 64-bit stream
//! id is set with `ChaCha8Rng::set_stream`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finaliser, used to derive child seeds from a parent seed and an index.
pub fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
