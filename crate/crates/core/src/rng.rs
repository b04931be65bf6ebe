//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream addressed by
//! `(seed, stream index)`, so a row or trial can be regenerated on its own
//! and parallel generation gives the same result as sequential generation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for one `(seed, index)` pair.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
