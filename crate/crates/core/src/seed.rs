//! Deterministic seed splitting.
//!
//! All randomness in the laboratory flows from a single `u64` seed.  Child
//! seeds are derived with SplitMix64 applied to (seed, tag, index), so a
//! parallel loop can hand each task its own stream without coordination.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed, a subsystem tag and a task index.
pub fn split(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(tag)) ^ index)
}

/// Deterministic RNG for a (seed, tag, index) triple.
pub fn rng(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(split(seed, tag, index))
}

/// Tags for the fixed splitting rule; one per randomized subsystem.
pub mod tag {
    pub const ORBIT_SAMPLE: u64 = 1;
    pub const REPLICATE: u64 = 2;
    pub const FRAME_RESEED: u64 = 3;
    pub const NORM_SAMPLING: u64 = 4;
    pub const CONE_SAMPLING: u64 = 5;
}
