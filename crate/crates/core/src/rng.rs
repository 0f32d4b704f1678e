//! Deterministic random streams.
//!
//! Every random draw in a solve comes from a ChaCha stream keyed by the run
//! seed and a stream id derived from `(domain, iteration, index)`. Results are
//! therefore independent of how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const DOMAIN_INIT: u64 = 1;
pub(crate) const DOMAIN_IMPORTANCE: u64 = 2;
pub(crate) const DOMAIN_SUBSAMPLE: u64 = 3;
pub(crate) const DOMAIN_CHANNEL: u64 = 4;
pub(crate) const DOMAIN_SOURCE: u64 = 5;
/// Free for callers outside the solvers, e.g. diagnostic sampling.
pub const DOMAIN_DIAGNOSTIC: u64 = 6;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream id for a `(domain, iteration, index)` triple.
pub fn stream_id(domain: u64, iter: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(domain) ^ iter) ^ index)
}

/// RNG for one independent stream of a seeded run.
pub fn stream_rng(seed: u64, domain: u64, iter: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(domain, iter, index));
    rng
}
