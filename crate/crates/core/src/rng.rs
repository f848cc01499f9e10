//! Seeded randomness.
//!
//! All stochastic code in this crate draws from [`SeedRng`], a thin wrapper
//! over the PCG XSL-RR 128/64 (MCG) generator (`rand_pcg::Pcg64Mcg`).
//! Identical seeds produce identical streams, which the generators, splits
//! and training loops rely on for reproducibility.

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_pcg::Pcg64Mcg;

#[derive(Debug, Clone)]
pub struct SeedRng {
    inner: Pcg64Mcg,
    seed: u64,
}

impl SeedRng {
    pub fn new(seed: u64) -> Self {
        SeedRng {
            inner: Pcg64Mcg::seed_from_u64(seed),
            seed,
        }
    }

    /// The seed this generator was constructed with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive an independent child generator. The child depends only on
    /// (seed, stream), not on how much of this generator was consumed, so
    /// work split across streams stays reproducible.
    pub fn fork(&self, stream: u64) -> SeedRng {
        SeedRng::new(splitmix64(self.seed ^ splitmix64(stream)))
    }

    /// Uniform integer in `[lo, hi]` (inclusive).
    pub fn uniform_usize(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(lo <= hi);
        self.inner.random_range(lo..=hi)
    }

    /// Uniform integer in `[lo, hi]` (inclusive).
    pub fn uniform_i64(&mut self, lo: i64, hi: i64) -> i64 {
        debug_assert!(lo <= hi);
        self.inner.random_range(lo..=hi)
    }

    /// Uniform float in `[lo, hi)`.
    pub fn uniform_f64(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        self.inner.random_range(lo..hi)
    }

    /// Sample from a normal distribution.
    pub fn normal_f64(&mut self, mean: f64, std_dev: f64) -> f64 {
        Normal::new(mean, std_dev)
            .expect("std_dev must be finite and non-negative")
            .sample(&mut self.inner)
    }

    pub fn shuffle<T>(&mut self, values: &mut [T]) {
        values.shuffle(&mut self.inner);
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seed_identical_stream() {
        let mut a = SeedRng::new(12345);
        let mut b = SeedRng::new(12345);
        for _ in 0..100 {
            assert_eq!(a.uniform_usize(0, 1000), b.uniform_usize(0, 1000));
            assert_eq!(a.uniform_f64(-1.0, 1.0), b.uniform_f64(-1.0, 1.0));
        }
    }

    #[test]
    fn fork_is_position_independent() {
        let a = SeedRng::new(7);
        let mut a2 = SeedRng::new(7);
        a2.uniform_usize(0, 9); // consume some of the stream
        let mut fa = a.fork(3);
        let mut fb = a2.fork(3);
        assert_eq!(fa.uniform_i64(0, 1 << 40), fb.uniform_i64(0, 1 << 40));
    }

    #[test]
    fn forks_differ_by_stream() {
        let r = SeedRng::new(7);
        let mut f0 = r.fork(0);
        let mut f1 = r.fork(1);
        let v0: Vec<usize> = (0..8).map(|_| f0.uniform_usize(0, 1 << 30)).collect();
        let v1: Vec<usize> = (0..8).map(|_| f1.uniform_usize(0, 1 << 30)).collect();
        assert_ne!(v0, v1);
    }
}
