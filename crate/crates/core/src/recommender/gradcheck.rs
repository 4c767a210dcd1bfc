//! Finite-difference verification for hand-derived gradients.
//!
//! Every trainer in this crate updates parameters with gradients written out
//! by hand, so each one is checked against central differences in its tests.
//! The helpers live in the public API so downstream experiments can verify
//! custom losses the same way.

/// Central-difference gradient of `f` at `x0`.
pub fn central_diff_grad(f: &mut dyn FnMut(&[f64]) -> f64, x0: &[f64], eps: f64) -> Vec<f64> {
    let mut x = x0.to_vec();
    let mut grad = Vec::with_capacity(x0.len());
    for k in 0..x0.len() {
        let orig = x[k];
        x[k] = orig + eps;
        let hi = f(&x);
        x[k] = orig - eps;
        let lo = f(&x);
        x[k] = orig;
        grad.push((hi - lo) / (2.0 * eps));
    }
    grad
}

/// Coordinate-wise relative error with a small absolute floor so exact-zero
/// gradients do not blow the ratio up.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

/// Largest relative error between an analytic gradient and the
/// central-difference gradient of `f` at `x0`.
pub fn max_grad_rel_err(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    analytic: &[f64],
    eps: f64,
) -> f64 {
    assert_eq!(x0.len(), analytic.len(), "gradient length mismatch");
    let numeric = central_diff_grad(f, x0, eps);
    analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}
