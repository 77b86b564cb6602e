//! Counter-based seed splitting.
//!
//! Every random stream in a run derives from a single base seed plus a
//! `(purpose, index)` pair, so replications can run on any worker in any order
//! and still draw the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes. Distinct purposes never share a ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Corpus = 1,
    Split = 2,
    Init = 3,
    Training = 4,
    QueueSample = 5,
    Arrivals = 6,
    Misc = 7,
}

/// A generator for `(seed, purpose, index)`.
pub fn rng_for(seed: u64, purpose: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) ^ index);
    rng
}
