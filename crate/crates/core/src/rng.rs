//! Seeded random streams.
//!
//! Every stochastic component draws from its own ChaCha stream derived from
//! the experiment seed and a fixed stream id, so adding a consumer never
//! shifts the numbers another consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const STREAM_INIT: u64 = 1;
pub const STREAM_ENV: u64 = 2;
pub const STREAM_ACTIONS: u64 = 3;
pub const STREAM_VAE: u64 = 4;
pub const STREAM_KMEANS: u64 = 5;
pub const STREAM_MAPPING: u64 = 6;
pub const STREAM_SNP: u64 = 7;
pub const STREAM_EVAL: u64 = 8;
pub const STREAM_IDENTITY: u64 = 9;

/// Stream `stream` of seed `seed`, further split by `index` (env id, set id, ...).
pub fn stream(seed: u64, stream: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.wrapping_mul(0x1_0000_0000).wrapping_add(index));
    rng
}
