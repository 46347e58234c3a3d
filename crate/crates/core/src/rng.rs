//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream derived
//! from the scenario seed, so adding draws in one place never shifts the
//! numbers seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream identifiers. Per-vehicle streams live above `VEHICLE_BASE`.
pub mod stream {
    pub const ARRIVALS: u64 = 1;
    pub const KINDS: u64 = 2;
    pub const ROUTES: u64 = 3;
    pub const OBSERVE: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const TRAINING_SET: u64 = 6;
    pub const WEIGHTS: u64 = 7;
    pub const SHUFFLE: u64 = 8;
    pub const CAN: u64 = 9;
    pub const TEST_SET: u64 = 10;
    pub const VEHICLE_BASE: u64 = 1 << 32;
}

pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn vehicle_rng(seed: u64, vehicle_id: u64) -> Rng {
    stream_rng(seed, stream::VEHICLE_BASE + vehicle_id)
}
