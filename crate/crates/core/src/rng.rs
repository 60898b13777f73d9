//! Seeded Gaussian stream shared by right-hand-side generation, start
//! vectors and sketching matrices.
//!
//! The generator is pinned so results can be reproduced from other
//! languages:
//!
//! * bit source: xoshiro256++ seeded through SplitMix64 from a `u64` seed
//!   (the reference `seed_from_u64` construction);
//! * uniforms: `(next_u64() >> 11) * 2^-53`, in `[0, 1)`;
//! * normals: Box–Muller on consecutive uniform pairs `(u1, u2)`, producing
//!   `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)` followed by the matching `sin` term.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

#[derive(Clone, Debug)]
pub struct NormalStream {
    rng: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn next_uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let radius = (-2.0 * (1.0 - u1).ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.next_normal();
        }
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        self.fill_normal(&mut v);
        v
    }
}

/// Derives an independent stream seed for a labelled sub-task.
pub(crate) fn derive_seed(seed: u64, salt: u64) -> u64 {
    // SplitMix64 finalizer over the combined value.
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let a = NormalStream::new(11).normal_vec(17);
        let b = NormalStream::new(11).normal_vec(17);
        assert_eq!(a, b);
        let c = NormalStream::new(12).normal_vec(17);
        assert_ne!(a, c);
    }

    #[test]
    fn moments_are_plausible() {
        let v = NormalStream::new(3).normal_vec(20_000);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 0.05);
        assert!((var - 1.0).abs() < 0.05);
    }
}
