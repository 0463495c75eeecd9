//! Deterministic random substreams.
//!
//! Every consumer of randomness derives its own ChaCha stream from the run
//! seed and a path of integers (stage, step, entry, ...). Results therefore do
//! not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream labels used by the library, so unrelated stages never collide.
pub mod stage {
    pub const INIT: u64 = 1;
    pub const VARQITE_V: u64 = 2;
    pub const L1: u64 = 3;
    pub const MONTE_CARLO: u64 = 4;
    pub const READOUT: u64 = 5;
}

/// Generator for `seed` on the stream addressed by `path`.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let stream = path.iter().fold(0x5eed_u64, |acc, &p| splitmix(acc ^ splitmix(p)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
