//! Seeded random streams.
//!
//! Every stochastic operation takes one of these explicitly. Streams are
//! ChaCha8 generators; independent substreams of one seed are obtained with
//! [`substream`], which is what parallel fan-out uses so results do not depend
//! on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type LshRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> LshRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream number `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> LshRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
