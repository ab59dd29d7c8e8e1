//! Named random sub-streams derived from a single run seed.
//!
//! Every consumer of randomness (splitting, initialisation, architecture
//! sampling, dropout, shuffling) owns its own ChaCha stream so that changing
//! how much one consumer draws never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Split,
    Init,
    Sampling,
    Dropout,
    Shuffle,
    RetrainInit,
    RetrainDropout,
    RetrainShuffle,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Split => 1,
            Stream::Init => 2,
            Stream::Sampling => 3,
            Stream::Dropout => 4,
            Stream::Shuffle => 5,
            Stream::RetrainInit => 6,
            Stream::RetrainDropout => 7,
            Stream::RetrainShuffle => 8,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
