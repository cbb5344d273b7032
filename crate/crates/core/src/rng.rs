//! Seeded random number generation.
//!
//! All randomness in the crate flows from a single 64-bit seed through
//! ChaCha8, a counter-based stream cipher RNG. Independent subsequences are
//! obtained by assigning each consumer a fixed stream id, so adding draws in
//! one stage never perturbs another stage. Results are bit-reproducible for a
//! given (seed, stream) pair on every platform.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids, one per randomness consumer.
pub mod streams {
    /// Synthetic subspace bases.
    pub const SYNTH_BASIS: u64 = 0x01;
    /// Synthetic per-pixel subspace coefficients.
    pub const SYNTH_COEFF: u64 = 0x02;
    /// Additive noise on synthetic cubes.
    pub const SYNTH_NOISE: u64 = 0x03;
    /// Random baseline coding patterns.
    pub const PATTERN_RANDOM: u64 = 0x10;
    /// Greedy-pursuit coding patterns.
    pub const PATTERN_GP: u64 = 0x11;
    /// Sensing (detector) noise.
    pub const SENSE_NOISE: u64 = 0x20;
    /// k-means initialization and restarts.
    pub const KMEANS: u64 = 0x30;
}

/// RNG for one consumer stream of the given master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
