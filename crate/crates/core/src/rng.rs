//! Counter-based seed splitting: every stream is `ChaCha8(mix(seed, label), stream = index)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SCHEME: &str = "chacha8(splitmix64(seed ^ fnv1a(label))), stream=index";

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Hash a sequence of words into one; order matters.
pub fn mix(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x243f_6a88_85a3_08d3u64, |acc, &w| splitmix64(acc ^ w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    pub seed: u64,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn rng(&self, label: &str, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ fnv1a(label)));
        rng.set_stream(index);
        rng
    }

    pub fn child(&self, label: &str, index: u64) -> SeedTree {
        SeedTree::new(mix(&[self.seed, fnv1a(label), index]))
    }
}
