//! Reproducible random streams.
//!
//! Every consumer of randomness derives its own ChaCha stream from the run
//! seed plus stable integer coordinates, so results do not depend on the
//! order in which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with any number of stream coordinates.
pub fn mix_seed(seed: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(seed), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

/// Stream for `(global_seed, worker_id, instance_id)`.
pub fn stream_rng(seed: u64, worker: u64, instance: u64) -> StreamRng {
    StreamRng::seed_from_u64(mix_seed(seed, &[worker, instance]))
}

pub fn seeded(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}
