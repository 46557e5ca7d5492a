//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 keystream keyed by the run seed, with the 64-bit
//! stream id derived from a domain tag and a tuple of indices. Streams are
//! therefore addressable by (seed, domain, indices) and never depend on which
//! thread consumes them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    OuterPath = 1,
    InnerNode = 2,
    NetInit = 3,
    NetShuffle = 4,
    Bootstrap = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream id for a domain and index tuple.
pub fn stream_id(domain: Domain, indices: &[u64]) -> u64 {
    indices
        .iter()
        .fold(splitmix64(domain as u64), |acc, &i| splitmix64(acc ^ splitmix64(i)))
}

/// Generator for the substream (seed, domain, indices).
pub fn stream(seed: u64, domain: Domain, indices: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(domain, indices));
    rng
}

/// Derive a child seed, used where an API takes a plain integer seed.
pub fn derive_seed(seed: u64, domain: Domain, indices: &[u64]) -> u64 {
    splitmix64(seed ^ stream_id(domain, indices))
}
