//! Counter-based random streams.
//!
//! Replicate `r` of a computation seeded with `s` always draws from the same
//! substream, so Monte Carlo results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates streams of unrelated computations that share a user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Shuffle = 1,
    NullCre = 2,
    NullStratified = 3,
    Hypergeometric = 4,
    Multinomial = 5,
    Sensitivity = 6,
    Simulation = 7,
    Population = 8,
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for replicate `stream` of `domain` under `seed`.
pub fn substream(seed: u64, domain: Domain, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(domain as u64)));
    rng.set_stream(stream);
    rng
}

/// Derives a child seed, e.g. one per simulation replicate.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    mix(mix(seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}
