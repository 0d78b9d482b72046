//! Counter-based normal draws.
//!
//! Every draw is a pure function of `(key, index)`: the `index`-th standard
//! normal of a stream does not depend on how many draws were taken before it
//! or on which thread asks for it.

use std::f64::consts::TAU;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replicate `replicate` in a study with `base_seed`. Never 0.
pub fn replicate_seed(base_seed: u64, replicate: u64) -> u64 {
    let s = mix64(mix64(base_seed ^ 0x5851_f42d_4c95_7f2d).wrapping_add(replicate.wrapping_mul(GOLDEN)));
    if s == 0 {
        1
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CounterNormal {
    key: u64,
}

impl CounterNormal {
    pub fn new(seed: u64) -> Self {
        Self { key: mix64(seed) }
    }

    #[inline]
    fn bits(&self, counter: u64) -> u64 {
        mix64(self.key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    /// Uniform on `(0, 1]`.
    #[inline]
    pub fn uniform(&self, counter: u64) -> f64 {
        ((self.bits(counter) >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal number `index` of this stream (Box–Muller, cosine branch).
    #[inline]
    pub fn normal(&self, index: u64) -> f64 {
        let u1 = self.uniform(2 * index);
        let u2 = self.uniform(2 * index + 1);
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }
}
