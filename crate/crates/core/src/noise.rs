//! Counter-based complex Wiener increments on a dyadic Brownian tree.
//!
//! The increment over coarse interval `k` of width `H` is fixed by the seed
//! alone, and every dyadic refinement is drawn from the Brownian bridge keyed by
//! (channel, level, index). Adaptive stepping therefore sees the same path
//! whatever step sizes it chooses.

use num_complex::Complex64 as C64;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deepest refinement level addressable by the counter layout.
pub const MAX_LEVEL: u32 = 40;

#[derive(Debug, Clone)]
pub struct NoiseTree {
    seed: u64,
}

fn unit_open(bits: u64) -> f64 {
    // 53 random bits mapped into (0, 1).
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

impl NoiseTree {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Complex standard normal with E|z|² = 1, keyed by position in the tree.
    pub fn normal(&self, channel: u64, level: u32, index: u64) -> C64 {
        assert!(level <= MAX_LEVEL && index < (1u64 << 58));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(channel);
        rng.set_word_pos((((level as u128) << 58) | index as u128) * 4);
        let u1 = unit_open(rng.next_u64());
        let u2 = unit_open(rng.next_u64());
        let r = (-u1.ln()).sqrt();
        let phi = 2.0 * std::f64::consts::PI * u2;
        C64::new(r * phi.cos(), r * phi.sin())
    }

    /// Increment over coarse interval `k` of width `h`.
    pub fn coarse(&self, channel: u64, k: u64, h: f64) -> C64 {
        self.normal(channel, 0, k) * h.sqrt()
    }

    /// Splits the increment `d` of node (`level`, `index`) with width `h` into
    /// its two halves by Brownian-bridge sampling.
    pub fn split(&self, channel: u64, level: u32, index: u64, d: C64, h: f64) -> (C64, C64) {
        let z = self.normal(channel, level + 1, index);
        let left = d * 0.5 + z * (0.5 * h.sqrt());
        (left, d - left)
    }
}

/// Sequential uniform draws for waiting-time sampling in the jump scheme.
#[derive(Debug, Clone)]
pub struct UniformStream {
    rng: ChaCha8Rng,
}

/// Stream index reserved for jump-scheme uniforms.
pub const JUMP_STREAM: u64 = 1 << 32;

impl UniformStream {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(JUMP_STREAM);
        Self { rng }
    }

    /// Uniform variate in (0, 1).
    pub fn next(&mut self) -> f64 {
        unit_open(self.rng.next_u64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyed_draws_are_reproducible_and_distinct() {
        let t = NoiseTree::new(7);
        assert_eq!(t.normal(0, 3, 11), t.normal(0, 3, 11));
        assert_ne!(t.normal(0, 3, 11), t.normal(1, 3, 11));
        assert_ne!(t.normal(0, 3, 11), t.normal(0, 4, 11));
        assert_ne!(t.normal(0, 3, 11), NoiseTree::new(8).normal(0, 3, 11));
    }

    #[test]
    fn complex_normal_moments() {
        let t = NoiseTree::new(1);
        let n = 200_000u64;
        let (mut m, mut m2, mut z2) = (C64::new(0.0, 0.0), 0.0, C64::new(0.0, 0.0));
        for i in 0..n {
            let z = t.normal(0, 0, i);
            m += z;
            m2 += z.norm_sqr();
            z2 += z * z;
        }
        let nf = n as f64;
        assert!((m / nf).norm() < 0.01);
        assert!((m2 / nf - 1.0).abs() < 0.01);
        assert!((z2 / nf).norm() < 0.01);
    }

    #[test]
    fn bridge_halves_sum_and_have_half_variance() {
        let t = NoiseTree::new(3);
        let h = 0.4;
        let n = 100_000u64;
        let mut var_left = 0.0;
        for i in 0..n {
            let d = t.coarse(0, i, h);
            let (l, r) = t.split(0, 0, i, d, h);
            assert!((l + r - d).norm() < 1e-15);
            var_left += l.norm_sqr();
        }
        assert!((var_left / n as f64 / (h / 2.0) - 1.0).abs() < 0.02);
    }

    #[test]
    fn uniforms_lie_in_open_unit_interval() {
        let mut s = UniformStream::new(5);
        let mean = (0..100_000).map(|_| s.next()).inspect(|&u| assert!(u > 0.0 && u < 1.0)).sum::<f64>() / 1e5;
        assert!((mean - 0.5).abs() < 0.01);
    }
}
