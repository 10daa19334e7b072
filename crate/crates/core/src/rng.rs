//! Seeded random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`], which produces
//! the same stream on every platform. A `(seed, stream)` pair identifies one
//! independent sub-stream: experiments use the seed for the run and the
//! stream id for the consumer (one stream per class when sampling data,
//! dedicated ids for shuffling, initialization and frame construction).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids at or above this value are reserved for non-class consumers,
/// leaving `0..CLASS_STREAM_LIMIT` for per-class sampling.
pub const CLASS_STREAM_LIMIT: u64 = 1 << 32;

pub const STREAM_CENTERS: u64 = CLASS_STREAM_LIMIT;
pub const STREAM_KAPPAS: u64 = CLASS_STREAM_LIMIT + 1;
pub const STREAM_ETF: u64 = CLASS_STREAM_LIMIT + 2;
pub const STREAM_INIT: u64 = CLASS_STREAM_LIMIT + 3;
pub const STREAM_SHUFFLE: u64 = CLASS_STREAM_LIMIT + 4;
pub const STREAM_TEST_DATA: u64 = CLASS_STREAM_LIMIT << 1;

/// Sub-stream `stream` of the generator seeded with `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-class sub-stream.
pub fn class_stream(seed: u64, class: usize) -> Rng {
    stream(seed, class as u64)
}
