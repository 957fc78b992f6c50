//! Splittable random streams.
//!
//! A [`Stream`] is a 64-bit key. Child streams are derived by mixing a tag
//! into the key, so every `(trial, iteration, sample)` tuple addresses its own
//! generator and the draws a sample receives never depend on the order in
//! which other samples were produced or evaluated.
//!
//! The generator behind a stream is ChaCha8, which is itself counter based:
//! a stream key selects the cipher key and the output is a pure function of
//! the block counter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Generator type handed out by [`Stream::rng`].
pub type StreamRng = ChaCha8Rng;

/// Tags reserved for well-known substreams.
pub mod tag {
    /// Bernoulli samples of one batch.
    pub const SAMPLES: u64 = 0x5341_4d50;
    /// Objective noise.
    pub const NOISE: u64 = 0x4e4f_4953;
    /// Mini-batch selection in network training.
    pub const MINIBATCH: u64 = 0x4d42_4154;
    /// Network weight initialisation.
    pub const INIT: u64 = 0x494e_4954;
    /// Dataset generation.
    pub const DATA: u64 = 0x4441_5441;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stream(u64);

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream(splitmix64(seed))
    }

    pub fn key(&self) -> u64 {
        self.0
    }

    /// Derives an independent child stream.
    pub fn child(&self, tag: u64) -> Stream {
        Stream(splitmix64(self.0 ^ splitmix64(tag.wrapping_add(0x9e37_79b9_7f4a_7c15))))
    }

    /// Derives a child stream from a path of tags.
    pub fn path(&self, tags: &[u64]) -> Stream {
        tags.iter().fold(*self, |s, &t| s.child(t))
    }

    pub fn rng(&self) -> StreamRng {
        let mut seed = [0u8; 32];
        let mut state = self.0;
        for chunk in seed.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit FNV-1a hash, used to turn labels into stream tags.
pub fn label_tag(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
