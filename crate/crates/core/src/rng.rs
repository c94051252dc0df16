//! Named, independently reproducible random streams derived from one seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Sampling = 2,
    Mc = 3,
    Heldout = 4,
    Noise = 5,
    Dataset = 6,
}

fn keyed(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(stream as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    keyed(seed, stream)
}

/// Counter-based generator for sample `index`, independent of evaluation order.
pub fn sample_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = keyed(seed, stream);
    rng.set_stream(index + 1);
    rng
}
