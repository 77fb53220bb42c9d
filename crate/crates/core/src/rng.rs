//! Seeded random streams.
//!
//! A run carries one master seed. Every consumer of randomness draws from its
//! own stream derived from that seed, so adding draws in one place never
//! shifts the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Independent random streams used by a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Doe = 1,
    Candidates = 2,
    ZoomOut = 3,
    CrossValidation = 4,
    Noise = 5,
    RandomSearch = 6,
    MonteCarlo = 7,
}

/// Returns the generator for `stream` under the master `seed`.
pub fn stream_rng(seed: u64, stream: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Derives a sub-seed for item `index` of `stream`, independent of how many
/// other items were drawn before it.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    let mut z = seed ^ (stream as u64).wrapping_mul(0xD1B5_4A32_D192_ED03) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for item `index` of `stream`.
pub fn item_rng(seed: u64, stream: Stream, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}
