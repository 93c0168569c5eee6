//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream derived from
//! the run seed, so adding draws in one subsystem never perturbs another. In
//! particular nothing on the receive side consumes randomness, which keeps
//! the transmission schedule independent of the receiver type.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Placement = 1,
    Traffic = 2,
    Shadowing = 3,
    Allocation = 4,
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// The full set of streams for one run.
#[derive(Debug, Clone)]
pub struct RunRngs {
    pub placement: SimRng,
    pub traffic: SimRng,
    pub shadowing: SimRng,
    pub allocation: SimRng,
}

impl RunRngs {
    pub fn new(seed: u64) -> Self {
        Self {
            placement: stream(seed, Stream::Placement),
            traffic: stream(seed, Stream::Traffic),
            shadowing: stream(seed, Stream::Shadowing),
            allocation: stream(seed, Stream::Allocation),
        }
    }
}
