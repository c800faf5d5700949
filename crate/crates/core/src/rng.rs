//! Reproducible random streams.
//!
//! Every random quantity is drawn from a ChaCha8 keystream selected by
//! `(seed, stream id)`; the keystream position is the counter. Signals,
//! schedules and graphs therefore never share a sequence, and per-trial seeds
//! are derived from `(master seed, trial index)` alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers. Distinct streams under the same seed are independent.
pub mod stream {
    pub const SIGNALS: u64 = 1;
    pub const SCHEDULE: u64 = 2;
    pub const GRAPH: u64 = 3;
    pub const AUX: u64 = 4;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `index` under `master`. Independent of worker count.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_mul(0xD134_2543_DE82_EF95).wrapping_add(1)))
}
