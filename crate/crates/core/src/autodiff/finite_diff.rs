//! Central finite differences — the permanent cross-check for reverse-mode
//! gradients and the fallback backend for penalty gradients.

use crate::error::Result;
use crate::scalar::Scalar;

/// Default step for central differences; chosen together with the crate's
/// gradient-check tolerances.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Central-difference gradient of `f` with respect to `point`, one coordinate
/// at a time: `(f(x + h·e_i) − f(x − h·e_i)) / 2h`.
pub fn central_gradient<S, F>(point: &[S], step: f64, mut f: F) -> Result<Vec<S>>
where
    S: Scalar,
    F: FnMut(&[S]) -> Result<S>,
{
    let h = S::of(step);
    let two_h = S::of(2.0 * step);
    let mut work = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let orig = work[i];
        work[i] = orig + h;
        let plus = f(&work)?;
        work[i] = orig - h;
        let minus = f(&work)?;
        work[i] = orig;
        grad.push((plus - minus) / two_h);
    }
    Ok(grad)
}

/// Relative error between an analytic gradient entry and its
/// finite-difference estimate. The denominator is floored so that entries
/// near zero are compared absolutely (finite differences carry ~1e-10 noise).
pub fn relative_error<S: Scalar>(analytic: S, fd: S, floor: f64) -> f64 {
    let denom = fd.abs().to_f64_lossy().max(floor);
    (analytic - fd).abs().to_f64_lossy() / denom
}

/// Largest relative error across a gradient vector.
pub fn max_relative_error<S: Scalar>(analytic: &[S], fd: &[S], floor: f64) -> f64 {
    assert_eq!(analytic.len(), fd.len());
    analytic
        .iter()
        .zip(fd)
        .map(|(&a, &b)| relative_error(a, b, floor))
        .fold(0.0, f64::max)
}
