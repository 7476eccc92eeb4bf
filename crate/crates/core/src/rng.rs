//! Counter-based random streams.
//!
//! Every stochastic routine derives an independent ChaCha stream from
//! `(seed, index)`, so results never depend on how work is partitioned.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
