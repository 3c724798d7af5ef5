//! Seeded random streams.
//!
//! Every stochastic operation draws from a ChaCha8 generator keyed by the
//! experiment seed. Independent consumers get independent ChaCha streams
//! (the 64-bit stream id), so adding draws in one place never shifts the
//! values another place sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream domains. The id layout is `domain << 56 | a << 28 | b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Domain {
    Centroids = 1,
    Samples = 2,
    Partition = 3,
    Noise = 4,
    Init = 5,
    Selection = 6,
    Byzantine = 7,
    LocalTrain = 8,
}

pub fn stream(seed: u64, domain: Domain, a: u64, b: u64) -> Rng {
    debug_assert!(a < (1 << 28) && b < (1 << 28));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 56) | (a << 28) | b);
    rng
}

/// Generator for a plain seed with no domain separation.
pub fn from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
