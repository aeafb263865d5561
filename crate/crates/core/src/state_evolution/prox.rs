use crate::scalar::Scalar;
use crate::special::{log_logistic_derivative, logistic};

/// Proximal operator of the logistic loss `z ↦ ln(1 + e^{−y z})` with step `V`:
/// the unique root of `z = ω + V y σ(−y z)`.
///
/// Solved in the margin variable `u = y z` by Newton's method inside the
/// bracket `[y ω, y ω + V]`, falling back to bisection whenever a Newton step
/// leaves the bracket.
pub fn prox_logistic<T: Scalar>(y: T, omega: T, v: T) -> T {
    debug_assert!(v > T::zero());
    let a = y * omega;
    let mut lo = a;
    let mut hi = a + v;
    let tol = T::c(1e-12).max(T::c(4.0) * T::epsilon()) * T::one().max(a.abs()).max(v);
    // Start from the end of the bracket the root is closer to.
    let mut u = if a > T::zero() {
        a + v * logistic(-a)
    } else {
        a + v * T::c(0.5)
    };
    u = u.max(lo).min(hi);
    for _ in 0..200 {
        let g = u - a - v * logistic(-u);
        if g.abs() <= tol {
            break;
        }
        if g > T::zero() {
            hi = u;
        } else {
            lo = u;
        }
        let dg = T::one() + v * log_logistic_derivative(u).exp();
        let mut next = u - g / dg;
        if !(next > lo && next < hi) {
            next = T::c(0.5) * (lo + hi);
        }
        if next == u {
            break;
        }
        u = next;
    }
    y * u
}

/// Second derivative of the logistic loss at `z` (independent of the label).
#[inline]
pub fn logistic_loss_curvature<T: Scalar>(z: T) -> T {
    log_logistic_derivative(z).exp()
}
