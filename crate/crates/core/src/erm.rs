//! Direct minimization of the ridge-regularized logistic risk
//!
//! ```text
//! R(w) = (1/n) Σ_μ ln(1 + exp(−y_μ w·x_μ)) + (λ/(2n)) ‖w‖²
//! ```
//!
//! This is `Σ ℓ + (λ/2)‖w‖²` rescaled by `1/n`: it has the same minimizer, and
//! the value at `w = 0` is `ln 2`. With this scaling `λ` has the same meaning
//! as in the state-evolution equations and in the GAMP ERM channel.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::montecarlo::for_each_test_point;
use crate::probit_model::{probit_label, Dataset};
use crate::scalar::{dot, norm_sq, Scalar};
use crate::special::{log_logistic_derivative, logistic, logistic_loss};

/// Dimension above which the Newton solver switches to L-BFGS.
pub const NEWTON_MAX_DIM: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErmStatus {
    Converged,
    /// `max_iter` reached before the gradient tolerance.
    MaxIterations,
    /// λ = 0 on separable data: the iterate norm hit the cap.
    DivergingMargin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ErmSolution<T: Scalar> {
    pub w_hat: Vec<T>,
    pub final_grad_norm: T,
    pub risk_value: T,
    pub iterations: usize,
    pub status: ErmStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErmConfig {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub norm_cap: f64,
}

impl Default for ErmConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_iter: 500,
            norm_cap: 1e4,
        }
    }
}

struct Objective<'a, T: Scalar> {
    data: &'a Dataset<T>,
    lambda: T,
    inv_n: T,
}

impl<T: Scalar> Objective<'_, T> {
    fn margins(&self, w: &[T]) -> Vec<T> {
        let xw = self.data.x.matvec(w);
        xw.iter().zip(&self.data.y).map(|(&a, &y)| a * y).collect()
    }

    fn risk_from_margins(&self, w: &[T], margins: &[T]) -> T {
        let loss: T = margins.iter().map(|&z| logistic_loss(z)).sum();
        self.inv_n * (loss + self.lambda * norm_sq(w) / T::c(2.0))
    }

    fn gradient(&self, w: &[T], margins: &[T]) -> Vec<T> {
        // ∂ℓ/∂(w·x) = −y σ(−y w·x)
        let coef: Vec<T> = margins
            .iter()
            .zip(&self.data.y)
            .map(|(&z, &y)| -y * logistic(-z))
            .collect();
        let mut g = self.data.x.matvec_t(&coef);
        for (gi, &wi) in g.iter_mut().zip(w) {
            *gi = self.inv_n * (*gi + self.lambda * wi);
        }
        g
    }

    fn hessian(&self, margins: &[T]) -> Matrix<T> {
        let curv: Vec<T> = margins
            .iter()
            .map(|&z| log_logistic_derivative(z).exp() * self.inv_n)
            .collect();
        let mut h = self.data.x.weighted_gram(&curv);
        for i in 0..h.rows() {
            h[(i, i)] += self.lambda * self.inv_n;
        }
        h
    }
}

/// Minimizes the regularized logistic risk of `data` at ridge strength `lambda`.
///
/// Damped Newton with Cholesky solves and Armijo backtracking for
/// `d ≤ NEWTON_MAX_DIM`, L-BFGS above. Every accepted step decreases the risk.
pub fn minimize<T: Scalar>(data: &Dataset<T>, lambda: T, cfg: &ErmConfig) -> Result<ErmSolution<T>> {
    data.validate()?;
    if !(lambda >= T::zero()) {
        return Err(invalid("lambda must be non-negative"));
    }
    if !(cfg.grad_tol > 0.0) || !(cfg.norm_cap > 0.0) {
        return Err(invalid("grad_tol and norm_cap must be positive"));
    }
    let obj = Objective {
        data,
        lambda,
        inv_n: T::from_usize_lossy(data.n()).recip(),
    };
    if data.d() <= NEWTON_MAX_DIM {
        Ok(newton(&obj, cfg))
    } else {
        Ok(lbfgs(&obj, cfg))
    }
}

/// Armijo backtracking along `p`; returns the accepted point, its margins and
/// risk, or `None` if no decrease was found.
///
/// Once the predicted decrease drops below the rounding level of the risk,
/// the full step is accepted if it reduces the gradient norm instead.
fn line_search<T: Scalar>(obj: &Objective<'_, T>, w: &[T], risk: T, g: &[T], p: &[T]) -> Option<(Vec<T>, Vec<T>, T)> {
    let slope = dot(g, p);
    if !(slope < T::zero()) {
        return None;
    }
    let mut t = T::one();
    for k in 0..60 {
        let cand: Vec<T> = w.iter().zip(p).map(|(&a, &b)| a + t * b).collect();
        let margins = obj.margins(&cand);
        let r = obj.risk_from_margins(&cand, &margins);
        if r <= risk + T::c(1e-4) * t * slope {
            return Some((cand, margins, r));
        }
        if k == 0 && -slope <= T::c(64.0) * T::epsilon() * risk.abs().max(T::min_positive_value()) {
            let g1 = obj.gradient(&cand, &margins);
            if norm_sq(&g1) < norm_sq(g) && r <= risk + T::c(4.0) * T::epsilon() * risk.abs() {
                return Some((cand, margins, r));
            }
            return None;
        }
        t *= T::c(0.5);
    }
    None
}

fn finish<T: Scalar>(
    obj: &Objective<'_, T>,
    mut w: Vec<T>,
    cap: T,
    iterations: usize,
    status: ErmStatus,
) -> ErmSolution<T> {
    if status == ErmStatus::DivergingMargin {
        // Separable at λ = 0: the risk decreases along the ray, so the best
        // iterate within the cap lies on its boundary.
        let norm = norm_sq(&w).sqrt();
        if norm > T::zero() {
            for v in w.iter_mut() {
                *v *= cap / norm;
            }
        }
    }
    let margins = obj.margins(&w);
    let g = obj.gradient(&w, &margins);
    ErmSolution {
        risk_value: obj.risk_from_margins(&w, &margins),
        final_grad_norm: norm_sq(&g).sqrt(),
        w_hat: w,
        iterations,
        status,
    }
}

fn newton<T: Scalar>(obj: &Objective<'_, T>, cfg: &ErmConfig) -> ErmSolution<T> {
    let d = obj.data.d();
    let tol = T::c(cfg.grad_tol);
    let cap = T::c(cfg.norm_cap);
    let mut w = vec![T::zero(); d];
    let mut margins = obj.margins(&w);
    let mut risk = obj.risk_from_margins(&w, &margins);
    // At λ = 0 an iterate with all margins positive proves the data separable:
    // the risk then has no minimizer, so we follow the descent until the cap.
    let mut separable = false;
    for it in 0..cfg.max_iter {
        separable |= obj.lambda == T::zero() && margins.iter().all(|&z| z > T::zero());
        let g = obj.gradient(&w, &margins);
        if !separable && norm_sq(&g).sqrt() <= tol {
            return finish(obj, w, cap, it, ErmStatus::Converged);
        }
        let mut h = obj.hessian(&margins);
        // Levenberg-style jitter when the Hessian is numerically singular
        // (λ = 0 with saturated margins).
        let mut jitter = T::zero();
        let chol = loop {
            match Cholesky::new(&h) {
                Ok(c) => break Some(c),
                Err(_) => {
                    let scale = (0..d)
                        .map(|i| h[(i, i)].abs())
                        .fold(T::zero(), T::max)
                        .max(T::min_positive_value());
                    let next = if jitter == T::zero() {
                        scale * T::c(1e-12)
                    } else {
                        jitter * T::c(100.0)
                    };
                    if !next.is_finite() || next > scale * T::c(1e6) {
                        break None;
                    }
                    for i in 0..d {
                        h[(i, i)] += next - jitter;
                    }
                    jitter = next;
                }
            }
        };
        let p: Vec<T> = match chol {
            Some(c) => c.solve(&g).into_iter().map(|v| -v).collect(),
            None => g.iter().map(|&v| -v).collect(),
        };
        match line_search(obj, &w, risk, &g, &p) {
            Some((w1, m1, r1)) => {
                w = w1;
                margins = m1;
                risk = r1;
                if norm_sq(&w).sqrt() > cap {
                    return finish(obj, w, cap, it + 1, ErmStatus::DivergingMargin);
                }
            }
            None => {
                // No further decrease is representable; report where we are.
                let status = if separable {
                    ErmStatus::DivergingMargin
                } else if norm_sq(&g).sqrt() <= tol {
                    ErmStatus::Converged
                } else {
                    ErmStatus::MaxIterations
                };
                return finish(obj, w, cap, it, status);
            }
        }
    }
    finish(obj, w, cap, cfg.max_iter, stuck_status(separable))
}

fn stuck_status(separable: bool) -> ErmStatus {
    if separable {
        ErmStatus::DivergingMargin
    } else {
        ErmStatus::MaxIterations
    }
}

fn lbfgs<T: Scalar>(obj: &Objective<'_, T>, cfg: &ErmConfig) -> ErmSolution<T> {
    const MEMORY: usize = 10;
    let d = obj.data.d();
    let tol = T::c(cfg.grad_tol);
    let cap = T::c(cfg.norm_cap);
    let mut w = vec![T::zero(); d];
    let mut margins = obj.margins(&w);
    let mut risk = obj.risk_from_margins(&w, &margins);
    let mut g = obj.gradient(&w, &margins);
    let mut hist: std::collections::VecDeque<(Vec<T>, Vec<T>, T)> = Default::default();
    let mut separable = false;
    for it in 0..cfg.max_iter.max(1) * 20 {
        separable |= obj.lambda == T::zero() && margins.iter().all(|&z| z > T::zero());
        if !separable && norm_sq(&g).sqrt() <= tol {
            return finish(obj, w, cap, it, ErmStatus::Converged);
        }
        // Two-loop recursion.
        let mut qv = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = *rho * dot(s, &qv);
            for (qi, &yi) in qv.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            for qi in qv.iter_mut() {
                *qi *= gamma;
            }
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = *rho * dot(y, &qv);
            for (qi, &si) in qv.iter_mut().zip(s) {
                *qi += (*a - b) * si;
            }
        }
        let p: Vec<T> = qv.iter().map(|&v| -v).collect();
        let Some((w1, m1, r1)) = line_search(obj, &w, risk, &g, &p) else {
            return finish(obj, w, cap, it, stuck_status(separable));
        };
        let g1 = obj.gradient(&w1, &m1);
        let s: Vec<T> = w1.iter().zip(&w).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = g1.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > T::zero() {
            if hist.len() == MEMORY {
                hist.pop_front();
            }
            hist.push_back((s, y, sy.recip()));
        }
        w = w1;
        margins = m1;
        risk = r1;
        g = g1;
        if norm_sq(&w).sqrt() > cap {
            return finish(obj, w, cap, it + 1, ErmStatus::DivergingMargin);
        }
    }
    finish(obj, w, cap, cfg.max_iter, stuck_status(separable))
}

/// Logistic confidence `σ(ŵ·x)`.
pub fn erm_confidence<T: Scalar>(x: &[T], w_hat: &[T]) -> T {
    logistic(dot(x, w_hat))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TestMetrics<T: Scalar> {
    /// Monte-Carlo 0/1 error.
    pub error: T,
    /// Monte-Carlo mean logistic loss.
    pub loss: T,
    /// `arccos(m/√(q (ρ + τ²)))/π` from the empirical overlaps.
    pub closed_form_error: T,
    /// `ŵ·w_star/d`
    pub m: T,
    /// `‖ŵ‖²/d`
    pub q: T,
    /// `‖w_star‖²/d`
    pub rho: T,
}

/// Test error and loss of `w_hat` on `n_test` fresh probit samples drawn from
/// auxiliary stream 0 of `seed`.
pub fn test_metrics<T: Scalar>(w_hat: &[T], w_star: &[T], tau: T, n_test: usize, seed: u64) -> TestMetrics<T> {
    let d = T::from_usize_lossy(w_star.len());
    let m = dot(w_hat, w_star) / d;
    let q = norm_sq(w_hat) / d;
    let rho = norm_sq(w_star) / d;
    let mut errors = 0usize;
    let mut loss = 0.0f64;
    for_each_test_point(w_star.len(), n_test, seed, 0, |x: &[T], xi| {
        let y = probit_label(dot(w_star, x), tau, xi);
        let a = dot(w_hat, x);
        let yhat = if a >= T::zero() { T::one() } else { -T::one() };
        if yhat != y {
            errors += 1;
        }
        loss += logistic_loss(y * a).f64();
    });
    let n = n_test.max(1) as f64;
    TestMetrics {
        error: T::c(errors as f64 / n),
        loss: T::c(loss / n),
        closed_form_error: if q > T::zero() {
            let c = m / (q * (rho + tau * tau)).sqrt();
            c.max(-T::one()).min(T::one()).acos() / T::PI()
        } else {
            T::c(0.5)
        },
        m,
        q,
        rho,
    }
}
