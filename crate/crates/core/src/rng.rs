//! Seeded random streams.
//!
//! Every stage of a run (potential batches, log-det batches, whitening,
//! evaluation) draws from its own ChaCha stream derived from one seed, so
//! changing how much one stage consumes never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StageRng = ChaCha8Rng;

pub const STREAM_POTENTIAL: u64 = 0;
pub const STREAM_LOGDET: u64 = 1;
pub const STREAM_WHITENING: u64 = 2;
pub const STREAM_EVALUATION: u64 = 3;
pub const STREAM_TARGET: u64 = 4;
pub const STREAM_SAMPLES: u64 = 5;
pub const STREAM_IMPORTANCE: u64 = 6;
pub const STREAM_REFERENCE: u64 = 7;

pub fn stage_rng(seed: u64, stream: u64) -> StageRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
