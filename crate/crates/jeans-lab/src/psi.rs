//! The rescaled gravity Ψ = e^{−3ζ} ∫_{−∞}^{ζ} u(z) e^{3z} dz of a unit-periodic u.
//!
//! Ψ is the unique periodic solution of ∂_ζΨ + 3Ψ = u. On a uniform grid it is
//! obtained exactly for the trigonometric interpolant of u: Fourier mode k is
//! multiplied by 1/(3 + 2πik). The multiplier is applied as a precomputed
//! circular convolution, so a grid shift of u shifts Ψ bit for bit.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Circular-convolution form of the periodic solution operator of ∂_ζΨ + 3Ψ = u.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiOperator {
    kernel: Vec<f64>,
}

impl PsiOperator {
    /// Builds the kernel for an even grid size `n`.
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::Domain(format!("psi grid size must be even and at least 4, got {n}")));
        }
        let nf = n as f64;
        let half = n / 2;
        let nyquist = 3.0 / (9.0 + PI * PI * nf * nf);
        let kernel = (0..n)
            .map(|j| {
                let mut s = 1.0 / 3.0;
                for k in 1..half {
                    let kf = k as f64;
                    let th = 2.0 * PI * kf * j as f64 / nf;
                    s += 2.0 * (3.0 * th.cos() + 2.0 * PI * kf * th.sin()) / (9.0 + 4.0 * PI * PI * kf * kf);
                }
                s += if j % 2 == 0 { nyquist } else { -nyquist };
                s / nf
            })
            .collect();
        Ok(Self { kernel })
    }

    pub fn len(&self) -> usize {
        self.kernel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernel.is_empty()
    }

    /// Writes Ψ for the grid values `u` into `out`.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = self.kernel.len();
        debug_assert_eq!(u.len(), n);
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for (m, c) in self.kernel.iter().enumerate() {
                s += c * u[(i + n - m) % n];
            }
            *o = s;
        }
    }
}

/// Ψ for the grid values `u` on a uniform grid of [0, 1).
pub fn compute_psi(u: &[f64]) -> Result<Vec<f64>> {
    let op = PsiOperator::new(u.len())?;
    let mut out = vec![0.0; u.len()];
    op.apply(u, &mut out);
    Ok(out)
}

/// Max-norm of ∂_ζΨ − (u − 3Ψ) with fourth-order periodic differences.
pub fn psi_defect(u: &[f64], psi: &[f64]) -> f64 {
    let n = u.len();
    let mut d = vec![0.0; n];
    crate::numerics::d1_periodic(psi, 1.0 / n as f64, &mut d);
    (0..n).map(|i| (d[i] - (u[i] - 3.0 * psi[i])).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::integrate_gl;
    use proptest::prelude::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|j| j as f64 / n as f64).collect()
    }

    #[test]
    fn constant_maps_to_third() {
        let psi = compute_psi(&[0.6; 32]).unwrap();
        assert!(psi.iter().all(|p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn single_mode_closed_form() {
        let n = 256;
        let z = grid(n);
        let u: Vec<f64> = z.iter().map(|x| (2.0 * PI * x).cos()).collect();
        let psi = compute_psi(&u).unwrap();
        for (x, p) in z.iter().zip(&psi) {
            let exact = (3.0 * (2.0 * PI * x).cos() + 2.0 * PI * (2.0 * PI * x).sin()) / (9.0 + 4.0 * PI * PI);
            assert!((p - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_truncated_tail_integral() {
        let n = 64;
        let z = grid(n);
        let ufun = |x: f64| (2.0 * PI * x).sin() + 0.3 * (4.0 * PI * x).cos() + 0.1;
        let u: Vec<f64> = z.iter().map(|&x| ufun(x)).collect();
        let psi = compute_psi(&u).unwrap();
        for (&x, p) in z.iter().zip(&psi) {
            let tail = integrate_gl(|s| ufun(s) * (3.0 * (s - x)).exp(), x - 20.0, x, 200, 8);
            assert!((p - tail).abs() < 1e-12, "{p} vs {tail}");
        }
    }

    #[test]
    fn defect_converges_at_fourth_order() {
        let ufun = |x: f64| (-(2.0 * PI * x).cos()).exp();
        let mut errs = Vec::new();
        for n in [32, 64, 128] {
            let u: Vec<f64> = grid(n).iter().map(|&x| ufun(x)).collect();
            errs.push(psi_defect(&u, &compute_psi(&u).unwrap()));
        }
        let o1 = (errs[0] / errs[1]).log2();
        let o2 = (errs[1] / errs[2]).log2();
        assert!(o1 > 3.5 && o2 > 3.5, "{errs:?}");
    }

    #[test]
    fn odd_or_tiny_grid_rejected() {
        assert!(PsiOperator::new(7).is_err());
        assert!(PsiOperator::new(2).is_err());
    }

    proptest! {
        #[test]
        fn shift_equivariance_is_exact(vals in prop::collection::vec(-1.0f64..1.0, 32), m in 0usize..32) {
            let n = vals.len();
            let op = PsiOperator::new(n).unwrap();
            let shifted: Vec<f64> = (0..n).map(|i| vals[(i + n - m) % n]).collect();
            let mut a = vec![0.0; n];
            let mut b = vec![0.0; n];
            op.apply(&vals, &mut a);
            op.apply(&shifted, &mut b);
            for i in 0..n {
                prop_assert!((b[i] - a[(i + n - m) % n]).abs() <= 1e-12);
            }
        }

        #[test]
        fn linear_in_u(a in prop::collection::vec(-1.0f64..1.0, 16), c in -3.0f64..3.0) {
            let pa = compute_psi(&a).unwrap();
            let scaled: Vec<f64> = a.iter().map(|v| c * v).collect();
            let ps = compute_psi(&scaled).unwrap();
            for i in 0..a.len() {
                prop_assert!((ps[i] - c * pa[i]).abs() < 1e-12);
            }
        }
    }
}
