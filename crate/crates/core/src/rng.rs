//! Seeded random numbers.
//!
//! The generator is ChaCha8 (`rand_chacha`) seeded through `seed_from_u64`.
//! Uniforms take the top 53 bits of a `u64` draw and land in `(0, 1]`.
//! Standard normals use the Box–Muller transform, consuming two uniforms per
//! pair of normals, with `libm` for the transcendental functions. Everything
//! is platform-independent, so a seed reproduces the same stream anywhere.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { inner: ChaCha8Rng::seed_from_u64(seed), spare: None }
    }

    /// Independent stream for `(seed, stream)`.
    pub fn stream(seed: u64, stream: &[u64]) -> Self {
        Self::new(derive_seed(seed, stream))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `(0, 1]`.
    pub fn uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn bernoulli(&mut self, prob: f64) -> bool {
        // uniform() is in (0, 1], so prob = 1 always succeeds and prob = 0 never does.
        self.uniform() <= prob
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Uniform integer in `0..n` by rejection sampling.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.inner.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Noncentral chi-square with `df` degrees of freedom and noncentrality
    /// `lambda` (mean `df + lambda`).
    pub fn noncentral_chi_square(&mut self, df: usize, lambda: f64) -> f64 {
        let mut x = 0.0;
        for i in 0..df {
            let z = self.normal() + if i == 0 { libm::sqrt(lambda.max(0.0)) } else { 0.0 };
            x += z * z;
        }
        x
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and a path of stream identifiers.
pub fn derive_seed(seed: u64, stream: &[u64]) -> u64 {
    stream.iter().fold(mix(seed), |acc, &s| mix(acc ^ mix(s)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a: Vec<f64> = Rng::new(7).normals(10);
        let b: Vec<f64> = Rng::new(7).normals(10);
        assert_eq!(a, b);
        assert_ne!(a, Rng::new(8).normals(10));
    }

    #[test]
    fn normal_moments() {
        let mut rng = Rng::new(1);
        let n = 200_000;
        let xs = rng.normals(n);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / libm::sqrt(n as f64));
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn streams_differ() {
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_ne!(derive_seed(1, &[0]), derive_seed(2, &[0]));
    }

    #[test]
    fn below_in_range() {
        let mut rng = Rng::new(3);
        let mut counts = [0usize; 5];
        for _ in 0..5000 {
            counts[rng.below(5)] += 1;
        }
        assert!(counts.iter().all(|&c| c > 800));
    }
}
