//! Seeded random points for the verification sweeps.
//!
//! The generator is PCG XSL RR 128/64 (`rand_pcg::Pcg64`) seeded through
//! `SeedableRng::seed_from_u64`. Flaschka points are drawn coordinate-wise
//! and uniformly: `a_i ∈ (0.1, 1.5]`, `b_i ∈ [-1.5, 1.5)`, with all `a`
//! coordinates drawn before the `b` coordinates.

use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;

use crate::dn_toda::DnFlaschkaPoint;
use crate::kt_system::KtFlaschkaPoint;

pub const A_RANGE: (f64, f64) = (0.1, 1.5);
pub const B_RANGE: (f64, f64) = (-1.5, 1.5);

#[derive(Debug, Clone)]
pub struct PointSampler {
    rng: Pcg64,
}

impl PointSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Pcg64::seed_from_u64(seed),
        }
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    pub fn vector(&mut self, len: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..len).map(|_| self.uniform(lo, hi)).collect()
    }

    /// Uniform in `(A_RANGE.0, A_RANGE.1]`.
    pub fn a_coord(&mut self) -> f64 {
        A_RANGE.1 - (A_RANGE.1 - A_RANGE.0) * self.rng.random::<f64>()
    }

    pub fn b_coord(&mut self) -> f64 {
        self.uniform(B_RANGE.0, B_RANGE.1)
    }

    pub fn kt_point(&mut self, n: usize) -> KtFlaschkaPoint {
        let a = (0..=n).map(|_| self.a_coord()).collect();
        let b = (0..n).map(|_| self.b_coord()).collect();
        KtFlaschkaPoint::new(a, b).expect("n >= 4 is the caller's responsibility")
    }

    pub fn dn_point(&mut self, n: usize) -> DnFlaschkaPoint {
        let a = (0..n).map(|_| self.a_coord()).collect();
        let b = (0..n).map(|_| self.b_coord()).collect();
        DnFlaschkaPoint::new(a, b).expect("n >= 4 is the caller's responsibility")
    }

    /// Canonical point with each `q_i ∈ [-q_max, q_max)` and
    /// `p_i ∈ [-p_max, p_max)`.
    pub fn canonical(&mut self, n: usize, q_max: f64, p_max: f64) -> (Vec<f64>, Vec<f64>) {
        let q = self.vector(n, -q_max, q_max);
        let p = self.vector(n, -p_max, p_max);
        (q, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_points() {
        let x = PointSampler::new(7).kt_point(5);
        let y = PointSampler::new(7).kt_point(5);
        assert_eq!(x, y);
        assert_ne!(x, PointSampler::new(8).kt_point(5));
    }

    #[test]
    fn ranges_are_respected() {
        let mut s = PointSampler::new(1);
        for _ in 0..2000 {
            let a = s.a_coord();
            let b = s.b_coord();
            assert!(a > 0.1 && a <= 1.5);
            assert!((-1.5..1.5).contains(&b));
        }
    }
}
