//! Seeded random streams.
//!
//! Every stochastic routine draws from a ChaCha8 stream addressed by
//! `(seed, stream)`, so independent pieces of work (noise columns,
//! permutations, Monte Carlo replicates) are reproducible regardless of the
//! order or thread they run on.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for substream `stream` of the master `seed`.
pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed, used when a replicate needs its own family of streams.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed
        ^ index
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
