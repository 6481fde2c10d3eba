//! Deterministic random streams.
//!
//! Every stochastic quantity in this crate is drawn from a [`Stream`] derived
//! by hashing `(master_seed, index)`. Streams are value types: a given
//! `(seed, index)` pair produces the same sequence on every run and on every
//! thread, so Monte-Carlo trials can be farmed out in any order without
//! changing results.

use num_complex::Complex64;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; used both for seeding and for hashing.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a master seed and a stream index into a single seed word.
#[inline]
pub fn stream_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master ^ GOLDEN).wrapping_add(index.wrapping_mul(GOLDEN)))
}

/// xoshiro256++ generator.
#[derive(Clone, Debug)]
pub struct Stream {
    s: [u64; 4],
}

impl Stream {
    /// Expand a single seed word into generator state via SplitMix64.
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = seed;
        let mut next = || {
            sm = sm.wrapping_add(GOLDEN);
            mix64(sm)
        };
        let s = [next(), next(), next(), next()];
        Stream { s }
    }

    /// Stream for trial `index` under `master` seed.
    pub fn substream(master: u64, index: u64) -> Self {
        Self::from_seed(stream_seed(master, index))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform on `[0, 1)` with 53 bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(0, 1]`; safe as a Box-Muller log argument.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform phase on `[-pi, pi)`.
    #[inline]
    pub fn angle(&mut self) -> f64 {
        (2.0 * self.uniform() - 1.0) * std::f64::consts::PI
    }

    /// Pair of independent standard normals (Box-Muller).
    #[inline]
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let r = (-2.0 * self.uniform_open().ln()).sqrt();
        let phi = 2.0 * std::f64::consts::PI * self.uniform();
        (r * phi.cos(), r * phi.sin())
    }

    /// Circularly symmetric complex Gaussian with unit variance
    /// (`E|z|^2 = 1`, each real part has variance 1/2).
    #[inline]
    pub fn complex_gaussian(&mut self) -> Complex64 {
        let (x, y) = self.normal_pair();
        Complex64::new(x, y) * std::f64::consts::FRAC_1_SQRT_2
    }
}
