//! Seeded random streams.
//!
//! Every source of randomness is a ChaCha8 stream keyed by the user seed and a
//! stream id, so adding draws to one consumer never shifts the draws seen by
//! another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SIMULATION: u64 = 1;
pub const RESTARTS: u64 = 2;
pub const FOLDS: u64 = 3;
pub const FACTORS: u64 = 4;
pub const TRANSPLANTS: u64 = 5;
pub const SPLIT: u64 = 6;

pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}
