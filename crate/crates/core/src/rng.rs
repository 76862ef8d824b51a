//! Deterministic seed derivation for independent random streams.
//!
//! Every stochastic unit of work (a chain, a simulated patient, a predictive
//! draw for one patient) gets its own generator seeded from a counter, so
//! results do not depend on execution order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for stream `(a, b)` under a base seed.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(a)).wrapping_add(b))
}

pub fn stream(base: u64, a: u64, b: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, a, b))
}
