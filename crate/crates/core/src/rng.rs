//! Deterministic random streams.
//!
//! Every Monte-Carlo worker, sweep point and training run owns its own
//! ChaCha stream. Child seeds are derived from a parent seed and a list of
//! integer tags with a SplitMix64 mixer, so the same tags always select the
//! same stream regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the simulator.
pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `tags` into `seed`; distinct tag lists give unrelated seeds.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Stream for `tags` under `seed`.
pub fn child_stream(seed: u64, tags: &[u64]) -> SimRng {
    stream(derive_seed(seed, tags))
}
