//! The constrained state space: the interval `[-alpha, alpha]` or the ball
//! `B(0, alpha)`, described through the defining function
//!
//! ```text
//! phi(x) = exp(alpha^2 - |x|^2) (|x|^2 - alpha^2) / (2 alpha)
//! ```
//!
//! which is negative inside, zero on the boundary and has a unit gradient
//! there. The reflection field of the dynamics is `-grad phi`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    alpha: f64,
    dim: usize,
}

impl DomainSpec {
    /// `dim == 1` is the interval, `dim > 1` the centred ball of radius `alpha`.
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParams(format!("alpha > 0 required, got {alpha}")));
        }
        if dim == 0 {
            return Err(Error::InvalidParams("dim >= 1 required".into()));
        }
        Ok(Self { alpha, dim })
    }

    pub fn interval(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1)
    }

    pub fn ball(alpha: f64, dim: usize) -> Result<Self> {
        Self::new(alpha, dim)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check_len(&self, x: &[f64]) {
        assert_eq!(x.len(), self.dim, "state has length {} but domain dimension is {}", x.len(), self.dim);
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        self.check_len(x);
        let a2 = self.alpha * self.alpha;
        let r2 = norm_sq(x);
        (a2 - r2).exp() * (r2 - a2) / (2.0 * self.alpha)
    }

    pub fn phi_grad(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.phi_grad_into(x, &mut out);
        out
    }

    pub fn phi_grad_into(&self, x: &[f64], out: &mut [f64]) {
        self.check_len(x);
        let a2 = self.alpha * self.alpha;
        let r2 = norm_sq(x);
        let scale = (a2 - r2).exp() * (1.0 + a2 - r2) / self.alpha;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = scale * xi;
        }
    }

    /// Closed-form bound on `|phi|` over all of space: the minimum sits at the
    /// origin and the two maxima at radius `sqrt(1 + alpha^2)`.
    pub fn phi_sup_bound(&self) -> f64 {
        let a = self.alpha;
        let at_min = 0.5 * a * (a * a).exp();
        let at_max = (-1.0f64).exp() / (2.0 * a);
        at_min.max(at_max)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.check_len(x);
        if self.dim == 1 {
            x[0].abs() <= self.alpha
        } else {
            norm_sq(x).sqrt() <= self.alpha
        }
    }

    /// Euclidean distance from `x` to the boundary sphere (or the two endpoints).
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        self.check_len(x);
        (norm_sq(x).sqrt() - self.alpha).abs()
    }

    /// Projects `x` onto the domain in place and returns the distance moved,
    /// which is the local-time increment of the reflection.
    pub fn project_in_place(&self, x: &mut [f64]) -> f64 {
        self.check_len(x);
        if self.dim == 1 {
            let v = x[0];
            if v > self.alpha {
                x[0] = self.alpha;
                v - self.alpha
            } else if v < -self.alpha {
                x[0] = -self.alpha;
                -self.alpha - v
            } else {
                0.0
            }
        } else {
            let r = norm_sq(x).sqrt();
            if r <= self.alpha {
                return 0.0;
            }
            let scale = self.alpha / r;
            for xi in x.iter_mut() {
                *xi *= scale;
            }
            // rounding can leave the radius one ulp outside
            while norm_sq(x).sqrt() > self.alpha {
                for xi in x.iter_mut() {
                    *xi *= 1.0 - f64::EPSILON;
                }
            }
            r - self.alpha
        }
    }

    pub fn project_to_domain(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let mut y = x.to_vec();
        let dl = self.project_in_place(&mut y);
        (y, dl)
    }
}

pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> DomainSpec {
        DomainSpec::interval(1.0).unwrap()
    }

    #[test]
    fn phi_values() {
        let d = unit();
        assert_eq!(d.phi(&[1.0]), 0.0);
        assert_eq!(d.phi(&[-1.0]), 0.0);
        assert!((d.phi(&[0.0]) + std::f64::consts::E / 2.0).abs() < 1e-12);
        assert!((d.phi(&[0.0]) + 1.359140914).abs() < 1e-9);
        assert!(d.phi(&[0.3]) < 0.0);
        assert!(d.phi(&[1.2]) > 0.0);
    }

    #[test]
    fn phi_gradient_values() {
        let d = unit();
        assert!((d.phi_grad(&[1.0])[0] - 1.0).abs() < 1e-12);
        assert!((d.phi_grad(&[-1.0])[0] + 1.0).abs() < 1e-12);
        assert_eq!(d.phi_grad(&[0.0])[0], 0.0);
        let crit = (2.0f64).sqrt();
        assert!(d.phi_grad(&[crit])[0].abs() < 1e-12);
    }

    #[test]
    fn unit_normal_on_boundary() {
        for alpha in [0.3, 1.0, 1.7] {
            let d = DomainSpec::interval(alpha).unwrap();
            assert!((d.phi_grad(&[alpha])[0] - 1.0).abs() < 1e-12);
            assert!((d.phi_grad(&[-alpha])[0] + 1.0).abs() < 1e-12);
        }
        let b = DomainSpec::ball(1.3, 3).unwrap();
        let x = [1.3 * 0.6, 0.0, 1.3 * 0.8];
        let g = b.phi_grad(&x);
        assert!((norm_sq(&g).sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let d = unit();
        assert_eq!(d.project_to_domain(&[0.3]), (vec![0.3], 0.0));
        let (x, dl) = d.project_to_domain(&[1.05]);
        assert_eq!(x, vec![1.0]);
        assert!((dl - 0.05).abs() < 1e-15);
        let (x, dl) = d.project_to_domain(&[-1.2]);
        assert_eq!(x, vec![-1.0]);
        assert!((dl - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_alpha() {
        assert!(DomainSpec::interval(0.0).is_err());
        assert!(DomainSpec::interval(-1.0).is_err());
        assert!(DomainSpec::new(1.0, 0).is_err());
    }

    #[test]
    fn gradient_matches_central_difference() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for alpha in [0.5, 1.0, 1.5] {
            let d = DomainSpec::interval(alpha).unwrap();
            for _ in 0..1000 {
                let x: f64 = rng.random_range(-2.0 * alpha..2.0 * alpha);
                let h = 1e-6 * (1.0 + x.abs());
                let fd = (d.phi(&[x + h]) - d.phi(&[x - h])) / (2.0 * h);
                let g = d.phi_grad(&[x])[0];
                let err = (fd - g).abs() / g.abs().max(1e-3);
                assert!(err <= 1e-6, "alpha={alpha} x={x} fd={fd} g={g}");
            }
        }
    }

    #[test]
    fn phi_is_bounded_on_dense_grid() {
        for alpha in [0.5, 1.0, 2.0] {
            let d = DomainSpec::interval(alpha).unwrap();
            let bound = d.phi_sup_bound();
            let n = 20_001;
            for k in 0..n {
                let x = -10.0 + 20.0 * k as f64 / (n - 1) as f64;
                assert!(d.phi(&[x]).abs() <= bound * (1.0 + 1e-12));
            }
        }
    }

    proptest! {
        #[test]
        fn projection_lands_in_domain(x in -5.0f64..5.0, alpha in 0.1f64..3.0) {
            let d = DomainSpec::interval(alpha).unwrap();
            let (y, dl) = d.project_to_domain(&[x]);
            prop_assert!(d.contains(&y));
            prop_assert!(dl >= 0.0);
            prop_assert_eq!(dl == 0.0, d.contains(&[x]));
            if dl > 0.0 {
                prop_assert!(d.boundary_distance(&y) <= 1e-12);
                prop_assert!((dl - (x - y[0]).abs()).abs() < 1e-12);
            }
        }

        #[test]
        fn ball_projection_lands_in_domain(x in proptest::collection::vec(-4.0f64..4.0, 3), alpha in 0.1f64..3.0) {
            let d = DomainSpec::ball(alpha, 3).unwrap();
            let (y, dl) = d.project_to_domain(&x);
            prop_assert!(d.contains(&y));
            prop_assert!(dl >= 0.0);
            prop_assert_eq!(dl == 0.0, d.contains(&x));
            if dl > 0.0 {
                prop_assert!(d.boundary_distance(&y) <= 1e-12);
            }
        }
    }
}
