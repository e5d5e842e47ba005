//! Seeded random streams.
//!
//! Every stochastic operation takes an explicit `u64` seed and derives its
//! generator here, so results never depend on global state or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent sub-streams drawn from the same trial seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Strikes = 1,
    GaitHardware = 2,
    Kinematics = 3,
    Bootstrap = 4,
    Search = 5,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
