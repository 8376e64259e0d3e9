//! Seed lineage: every random draw in an experiment comes from a ChaCha
//! stream selected by (seed, purpose), so changing one purpose's consumption
//! never shifts another's.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Split = 2,
    ValidationSplit = 3,
    Shuffle = 4,
    /// Model initialization; the model's position in the config is added on top.
    Init = 16,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    stream_rng_offset(seed, stream, 0)
}

pub fn stream_rng_offset(seed: u64, stream: Stream, offset: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64 + offset);
    rng
}

/// A 64-bit seed for APIs that take plain seeds, drawn from a stream.
pub fn derived_seed(seed: u64, stream: Stream) -> u64 {
    use rand::RngCore;
    stream_rng(seed, stream).next_u64()
}
