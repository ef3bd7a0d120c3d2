//! Keyed random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose seed is a
//! hash of `(base_seed, key path)`. Results therefore do not depend on how work
//! is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream purposes, used as the first component of a key path.
pub mod purpose {
    pub const DATA: u64 = 1;
    pub const KNOCKOFF: u64 = 2;
    pub const BOOST: u64 = 3;
    pub const HOLDOUT: u64 = 4;
    pub const BASELINE: u64 = 5;
    pub const TEST: u64 = 99;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A position in the tree of random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    state: u64,
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        Self { state: splitmix(seed) }
    }

    pub fn child(self, tag: u64) -> Self {
        Self {
            state: splitmix(self.state ^ splitmix(tag.wrapping_add(0x632B_E59B_D9B4_E019))),
        }
    }

    pub fn path(self, tags: &[u64]) -> Self {
        tags.iter().fold(self, |k, &t| k.child(t))
    }

    pub fn stream(self) -> Stream {
        let mut seed = [0u8; 32];
        let mut s = self.state;
        for chunk in seed.chunks_mut(8) {
            s = splitmix(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}
