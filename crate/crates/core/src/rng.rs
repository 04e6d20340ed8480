//! Named random sub-streams derived from a single 64-bit seed.
//!
//! Every module draws from its own stream (`substream(seed, "ansatz")`, ...), so a module
//! can be exercised in isolation and adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Seed of the stream called `name` under the root `seed`.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    splitmix64(seed ^ splitmix64(fnv1a(name)))
}

pub fn substream(seed: u64, name: &str) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, name))
}

/// Stream number `index` below `name`, for per-trial or per-worker splits.
pub fn indexed_stream(seed: u64, name: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(splitmix64(derive_seed(seed, name) ^ splitmix64(index.wrapping_add(1))))
}
