//! Finite-difference gradient oracle.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Central differences `(f(x + eps·e_i) − f(x − eps·e_i)) / (2·eps)` for
/// every coordinate `i`.
pub fn finite_difference_grad(mut f: impl FnMut(&Tensor) -> Result<f64>, x: &Tensor, eps: f64) -> Result<Tensor> {
    if !(eps > 0.0) {
        return Err(Error::domain("finite_difference_grad", "eps must be positive"));
    }
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.numel());
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let hi = f(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let lo = f(&probe)?;
        probe.data_mut()[i] = orig;
        out.push((hi - lo) / (2.0 * eps));
    }
    Tensor::new(x.shape(), out)
}

/// Outcome of comparing an analytic gradient against a numeric one.
#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub worst_rel: f64,
    pub worst_abs: f64,
    pub passed: bool,
}

/// Coordinates whose numeric gradient is below `small` in magnitude are
/// judged on absolute error `abs_tol`; all others on relative error
/// `rel_tol`.
pub fn compare_gradients(analytic: &Tensor, numeric: &Tensor, rel_tol: f64, abs_tol: f64, small: f64) -> GradCheck {
    let mut worst_rel: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    let mut passed = analytic.shape() == numeric.shape();
    for (&a, &n) in analytic.data().iter().zip(numeric.data()) {
        let err = (a - n).abs();
        if n.abs().max(a.abs()) < small {
            worst_abs = worst_abs.max(err);
            passed &= err < abs_tol;
        } else {
            let rel = err / n.abs().max(a.abs());
            worst_rel = worst_rel.max(rel);
            passed &= rel < rel_tol;
        }
    }
    GradCheck {
        worst_rel,
        worst_abs,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_and_constant() {
        let x = Tensor::scalar(3.0);
        let g = finite_difference_grad(|t| Ok(t.item() * t.item()), &x, 1e-4).unwrap();
        assert!((g.item() - 6.0).abs() < 1e-6);
        let c = finite_difference_grad(|_| Ok(1.5), &x, 1e-4).unwrap();
        assert_eq!(c.item(), 0.0);
        assert!(finite_difference_grad(|_| Ok(0.0), &x, 0.0).is_err());
    }
}
