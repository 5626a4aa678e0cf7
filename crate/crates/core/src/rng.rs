//! Seeded random streams.
//!
//! Every sequence, chain or replicate draws from its own ChaCha8 stream,
//! selected by `(seed, stream_id)`. Results therefore do not depend on the
//! order in which parallel work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, stream_id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// A sub-stream for a second level of indexing (e.g. chain within run).
pub fn substream(seed: u64, outer: u64, inner: u64) -> StreamRng {
    stream(seed ^ outer.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17), inner)
}
