//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by the
//! user seed and addressed by `(replica, site, tag)`. Any site of any replica
//! can therefore be regenerated in isolation, and extending a window never
//! changes the draws of sites that were already sampled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct tags give independent streams at
/// the same `(replica, site)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    Potential,
    Hopping,
    Frame,
    Other(u32),
}

impl Tag {
    fn code(self) -> u64 {
        match self {
            Tag::Potential => 1,
            Tag::Hopping => 2,
            Tag::Frame => 3,
            Tag::Other(k) => 0x1_0000_0000 | k as u64,
        }
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn key_from_seed(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

/// Stream identifier for `(replica, site, tag)`.
pub fn stream_id(replica: u64, site: i64, tag: Tag) -> u64 {
    let mut h = splitmix64(replica ^ 0x5851_f42d_4c95_7f2d);
    h = splitmix64(h ^ site as u64);
    splitmix64(h ^ tag.code())
}

/// The random stream for one `(seed, replica, site, tag)` address.
pub fn substream(seed: u64, replica: u64, site: i64, tag: Tag) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(key_from_seed(seed));
    rng.set_stream(stream_id(replica, site, tag));
    rng
}

/// Seed for logical task `index` of a run. Depends only on the index, never
/// on which worker executes the task.
pub fn task_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_add(0xa076_1d64_78bd_642f)))
}
