//! Asymptotic overlaps of the Bayes-optimal estimator and of ridge-regularized
//! logistic regression, from the self-consistent state-evolution equations.
//!
//! Conventions: the teacher has unit norm per coordinate (`ρ = 1`) and the
//! ERM objective is `Σ_μ ℓ(y_μ, w·x_μ) + (λ/2)‖w‖²`, so that `λ` enters the
//! overlap equations as `V = 1/(λ + V̂)`.

mod prox;

pub use prox::{logistic_loss_curvature, prox_logistic};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gamp::{f_out_bayes_with_derivative, f_out_erm_with_derivative};
use crate::quadrature::{self, GaussHermite};
use crate::scalar::Scalar;
use crate::special::{log_erfc, norm_cdf, norm_pdf, softplus};

/// Teacher norm per coordinate.
pub const RHO: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SEConfig {
    pub quadrature_nodes: usize,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    /// Weight of the previous iterate in the damped Picard update.
    pub fp_damping: f64,
}

impl Default for SEConfig {
    fn default() -> Self {
        Self {
            quadrature_nodes: 199,
            fp_tol: 1e-9,
            fp_max_iter: 5000,
            fp_damping: 0.5,
        }
    }
}

impl SEConfig {
    pub fn validate(&self) -> Result<()> {
        if self.quadrature_nodes.is_multiple_of(2) || self.quadrature_nodes < 51 || self.quadrature_nodes > 500 {
            return Err(invalid("quadrature_nodes must be odd and in 51..=500"));
        }
        if !(self.fp_tol > 0.0) || self.fp_max_iter == 0 {
            return Err(invalid("fp_tol must be positive and fp_max_iter non-zero"));
        }
        if !(0.0..1.0).contains(&self.fp_damping) {
            return Err(invalid("fp_damping must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn rule<T: Scalar>(&self) -> GaussHermite<T> {
        GaussHermite::new(self.quadrature_nodes)
    }
}

/// Fixed-point overlaps. `m_hat`, `q_hat`, `v_hat` are the ERM conjugates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Overlaps<T: Scalar> {
    pub q_bo: T,
    pub m: T,
    pub q_erm: T,
    pub v_erm: T,
    pub m_hat: T,
    pub q_hat: T,
    pub v_hat: T,
}

/// Outcome of an ERM solve: overlaps plus convergence information.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErmFixedPoint<T: Scalar> {
    pub m: T,
    pub q: T,
    pub v: T,
    pub m_hat: T,
    pub q_hat: T,
    pub v_hat: T,
    pub iterations: usize,
    pub residual: T,
}

/// `E[f(z, ω, ξ)]` for `(z, ω) ~ N(0, [[1, m], [m, q]])`, `ξ ~ N(0, 1)`.
pub fn gaussian_expectation_2d<T: Scalar, F: FnMut(T, T, T) -> T>(f: F, m: T, q: T, cfg: &SEConfig) -> T {
    quadrature::gaussian_expectation_2d(&cfg.rule(), m, q, f)
}

/// Bayes error `arccos(√(q_bo/(1+τ²)))/π`.
pub fn bayes_error<T: Scalar>(q_bo: T, tau: T) -> T {
    (q_bo / (T::one() + tau * tau)).sqrt().min(T::one()).acos() / T::PI()
}

/// Test error of a linear classifier with overlaps `(m, q)`:
/// `arccos(m/√(q(1+τ²)))/π`.
pub fn erm_error<T: Scalar>(m: T, q: T, tau: T) -> T {
    let c = m / (q * (T::one() + tau * tau)).sqrt();
    c.max(-T::one()).min(T::one()).acos() / T::PI()
}

/// `q̂` of the Bayes-optimal channel at overlap `q`, via the one-dimensional
/// reduction `(2/π) α/(1+τ²−q) ∫ N(z|0, s²) e^{−2z²}/(erfc(z) erfc(−z)) dz`
/// with `s² = q/(2(1+τ²−q))`.
pub fn bo_q_hat<T: Scalar>(alpha: T, tau: T, q: T, rule: &GaussHermite<T>) -> T {
    let two = T::c(2.0);
    let gap = T::one() + tau * tau - q;
    let s2 = q / (two * gap);
    // Absorb one factor e^{−z²} into the Gaussian weight:
    // N(z|0, s²) e^{−z²} = N(z|0, v) / √(1 + 2s²),  v = s²/(1 + 2s²).
    let v = s2 / (T::one() + two * s2);
    let norm = (T::one() + two * s2).sqrt().recip();
    let integral = norm * rule.expect_normal(T::zero(), v.sqrt(), |z| (-z * z - log_erfc(z) - log_erfc(-z)).exp());
    two / T::PI() * alpha / gap * integral
}

/// Solves `q = q̂/(1 + q̂)` for the Bayes-optimal overlap.
pub fn solve_bo<T: Scalar>(alpha: T, tau: T, cfg: &SEConfig) -> Result<T> {
    cfg.validate()?;
    if !(alpha >= T::zero()) || !(tau >= T::zero()) {
        return Err(invalid("alpha and tau must be non-negative"));
    }
    if alpha == T::zero() {
        return Ok(T::zero());
    }
    let rule = cfg.rule::<T>();
    let damp = T::c(cfg.fp_damping);
    let tol = T::c(cfg.fp_tol);
    let mut q = T::c(0.5);
    let mut change = T::infinity();
    for _ in 0..cfg.fp_max_iter {
        let qh = bo_q_hat(alpha, tau, q, &rule);
        let target = qh / (T::one() + qh);
        let next = (T::one() - damp) * target + damp * q;
        if !next.is_finite() {
            break;
        }
        change = (next - q).abs();
        q = next;
        if change <= tol {
            return Ok(q);
        }
    }
    Err(Error::NonConvergence {
        what: "Bayes state evolution",
        iterations: cfg.fp_max_iter,
        residual: change.f64(),
        last: vec![q.f64()],
    })
}

/// Conjugate overlaps `(m̂, q̂, V̂)` for a generic output denoiser evaluated
/// at the student overlaps `(m, q, V)`.
///
/// The teacher field `z` and the noise `ξ` are integrated analytically given
/// the student field `ω ~ N(0, q)`: the label law is
/// `P(y | ω) = Φ(y (m/q) ω / s₀)` with `s₀² = τ² + ρ − m²/q`, which leaves a
/// single Gauss-Hermite sum over `ω`.
pub fn channel_hats<T, F>(alpha: T, tau: T, m: T, q: T, v: T, rule: &GaussHermite<T>, denoiser: F) -> (T, T, T)
where
    T: Scalar,
    F: Fn(T, T, T) -> (T, T),
{
    let s0 = (tau * tau + T::c(RHO) - m * m / q).max(T::zero()).sqrt();
    let k = m / q;
    let sq = q.sqrt();
    let (mut mh, mut qh, mut vh) = (T::zero(), T::zero(), T::zero());
    for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
        let omega = sq * u;
        let t = k * omega / s0;
        let zp = norm_cdf(t);
        let zm = norm_cdf(-t);
        let dens = norm_pdf(t) / s0;
        let (fp, dfp) = denoiser(T::one(), omega, v);
        let (fm, dfm) = denoiser(-T::one(), omega, v);
        qh += w * (zp * fp * fp + zm * fm * fm);
        vh -= w * (zp * dfp + zm * dfm);
        mh += w * dens * (fp - fm);
    }
    (alpha * mh, alpha * qh, alpha * vh)
}

/// Residual of the unreduced `(m, q, V)` system for the Bayes-optimal channel
/// at the Nishimori point `m = q = q_bo`, `V = 1 − q_bo`.
pub fn bo_unreduced_residual<T: Scalar>(alpha: T, tau: T, q_bo: T, cfg: &SEConfig) -> T {
    let rule = cfg.rule::<T>();
    let (mh, qh, vh) = channel_hats(alpha, tau, q_bo, q_bo, T::one() - q_bo, &rule, |y, w, v| {
        f_out_bayes_with_derivative(y, w, v, tau)
    });
    let prec = T::one() + vh;
    let m = mh / prec;
    let q = (mh * mh + qh) / (prec * prec);
    let v = T::one() / prec;
    (m - q_bo)
        .abs()
        .max((q - q_bo).abs())
        .max((v - (T::one() - q_bo)).abs())
}

/// Sample ratio below which the training set is linearly separable (so the
/// unregularized logistic risk has no minimizer):
/// `α_c = 1 / min_t E[(Z − t Y V)₊²]` with `Z, V ~ N(0, 1)` independent and
/// `Y` the probit label of `V`. Infinite for `τ = 0`.
pub fn separability_threshold<T: Scalar>(tau: T, cfg: &SEConfig) -> T {
    if !(tau > T::zero()) {
        return T::infinity();
    }
    let rule = cfg.rule::<T>();
    // E[(Z − c)₊²] = (1 + c²) Φ(−c) − c φ(c)
    let g = |c: T| (T::one() + c * c) * norm_cdf(-c) - c * norm_pdf(c);
    let h = |t: T| {
        rule.expect(|v| {
            let p = norm_cdf(v / tau);
            p * g(t * v) + (T::one() - p) * g(-t * v)
        })
    };
    // h is convex in t; bracket the minimum, then golden-section search.
    let mut hi = T::one();
    while h(hi * T::c(2.0)) < h(hi) && hi < T::c(1e6) {
        hi *= T::c(2.0);
    }
    let t = golden_section(T::zero(), hi * T::c(2.0), T::c(1e-12), h);
    h(t).recip()
}

/// Minimizer of a unimodal `f` on `[a, b]`.
pub(crate) fn golden_section<T: Scalar, F: FnMut(T) -> T>(mut a: T, mut b: T, tol: T, mut f: F) -> T {
    let r = T::c((5.0_f64.sqrt() - 1.0) / 2.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..300 {
        if (b - a).abs() <= tol * T::one().max(a.abs() + b.abs()) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

/// Initial ERM iterate `(m, q, V)`.
pub const ERM_INIT: (f64, f64, f64) = (0.1, 0.5, 1.0);

/// Solves the ridge-logistic overlap equations
/// `V = 1/(λ + V̂)`, `q = (m̂² + q̂)/(λ + V̂)²`, `m = m̂/(λ + V̂)`
/// by damped Picard iteration.
pub fn solve_erm<T: Scalar>(alpha: T, tau: T, lambda: T, cfg: &SEConfig) -> Result<ErmFixedPoint<T>> {
    solve_erm_from(alpha, tau, lambda, cfg, None)
}

/// As [`solve_erm`], optionally warm-started from `(m, q, V)`.
pub fn solve_erm_from<T: Scalar>(
    alpha: T,
    tau: T,
    lambda: T,
    cfg: &SEConfig,
    init: Option<(T, T, T)>,
) -> Result<ErmFixedPoint<T>> {
    cfg.validate()?;
    if !(alpha > T::zero()) || !(tau >= T::zero()) || !(lambda >= T::zero()) {
        return Err(invalid("need alpha > 0, tau >= 0, lambda >= 0"));
    }
    if lambda == T::zero() {
        let alpha_c = separability_threshold(tau, cfg);
        if alpha <= alpha_c {
            return Err(Error::SeparableRegime {
                alpha: alpha.f64(),
                alpha_c: alpha_c.f64(),
            });
        }
    }
    let rule = cfg.rule::<T>();
    let damp = T::c(cfg.fp_damping);
    let tol = T::c(cfg.fp_tol);
    let (mut m, mut q, mut v) = init.unwrap_or((T::c(ERM_INIT.0), T::c(ERM_INIT.1), T::c(ERM_INIT.2)));
    let mut change = T::infinity();
    for it in 1..=cfg.fp_max_iter {
        let (mh, qh, vh) = channel_hats(alpha, tau, m, q, v, &rule, f_out_erm_with_derivative);
        let prec = lambda + vh;
        let m_new = mh / prec;
        let q_new = (mh * mh + qh) / (prec * prec);
        let v_new = prec.recip();
        if !(m_new.is_finite() && q_new.is_finite() && v_new.is_finite() && v_new > T::zero()) {
            return Err(Error::NonConvergence {
                what: "ERM state evolution",
                iterations: it,
                residual: f64::INFINITY,
                last: vec![m.f64(), q.f64(), v.f64()],
            });
        }
        let mix = |new: T, old: T| (T::one() - damp) * new + damp * old;
        let (m1, q1, v1) = (mix(m_new, m), mix(q_new, q), mix(v_new, v));
        // Scale-free: m is measured against √q, the natural size of the overlaps.
        change = ((m1 - m).abs() / q1.sqrt())
            .max(rel_change(q1, q))
            .max(rel_change(v1, v));
        m = m1;
        q = q1;
        v = v1;
        if change <= tol {
            let (mh, qh, vh) = channel_hats(alpha, tau, m, q, v, &rule, f_out_erm_with_derivative);
            let prec = lambda + vh;
            let residual = (m - mh / prec)
                .abs()
                .max((q - (mh * mh + qh) / (prec * prec)).abs())
                .max((v - prec.recip()).abs());
            return Ok(ErmFixedPoint {
                m,
                q,
                v,
                m_hat: mh,
                q_hat: qh,
                v_hat: vh,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "ERM state evolution",
        iterations: cfg.fp_max_iter,
        residual: change.f64(),
        last: vec![m.f64(), q.f64(), v.f64()],
    })
}

fn rel_change<T: Scalar>(new: T, old: T) -> T {
    (new - old).abs() / new.abs().max(old.abs())
}

/// Both fixed points combined.
pub fn solve_overlaps<T: Scalar>(alpha: T, tau: T, lambda: T, cfg: &SEConfig) -> Result<Overlaps<T>> {
    let q_bo = solve_bo(alpha, tau, cfg)?;
    let e = solve_erm(alpha, tau, lambda, cfg)?;
    Ok(Overlaps {
        q_bo,
        m: e.m,
        q_erm: e.q,
        v_erm: e.v,
        m_hat: e.m_hat,
        q_hat: e.q_hat,
        v_hat: e.v_hat,
    })
}

/// Asymptotic expected test logistic loss `E[ln(1 + e^{−y ω})]` of a linear
/// classifier with overlaps `(m, q)`.
pub fn erm_test_loss<T: Scalar>(m: T, q: T, tau: T, rule: &GaussHermite<T>) -> T {
    let s0 = (tau * tau + T::c(RHO) - m * m / q).max(T::zero()).sqrt();
    let k = m / q;
    let sq = q.sqrt();
    rule.expect(|u| {
        let omega = sq * u;
        let zp = norm_cdf(k * omega / s0);
        zp * softplus(-omega) + (T::one() - zp) * softplus(omega)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg() -> SEConfig {
        SEConfig::default()
    }

    #[test]
    fn config_validation() {
        assert!(SEConfig {
            quadrature_nodes: 50,
            ..cfg()
        }
        .validate()
        .is_err());
        assert!(SEConfig {
            quadrature_nodes: 49,
            ..cfg()
        }
        .validate()
        .is_err());
        assert!(cfg().validate().is_ok());
    }

    #[test]
    fn bo_no_data() {
        assert_eq!(solve_bo(0.0_f64, 0.7, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn bo_small_q_limit() {
        // At q = 0 the integral reduces to (2/π) α / (1 + τ²).
        let rule = cfg().rule::<f64>();
        assert_relative_eq!(
            bo_q_hat(3.0, 0.5, 0.0, &rule),
            2.0 / std::f64::consts::PI * 3.0 / 1.25,
            max_relative = 1e-13
        );
    }

    #[test]
    fn nishimori_hats_coincide() {
        let rule = cfg().rule::<f64>();
        for &(alpha, tau, q) in &[(2.0_f64, 0.5, 0.4), (10.0, 0.5, 0.9), (5.0, 2.0, 0.3), (5.0, 0.0, 0.9)] {
            let (mh, qh, vh) = channel_hats(alpha, tau, q, q, 1.0 - q, &rule, |y, w, v| {
                f_out_bayes_with_derivative(y, w, v, tau)
            });
            let reduced = bo_q_hat(alpha, tau, q, &rule);
            assert_relative_eq!(mh, qh, max_relative = 1e-9);
            assert_relative_eq!(vh, qh, max_relative = 1e-9);
            assert_relative_eq!(qh, reduced, max_relative = 1e-9);
        }
    }

    #[test]
    fn erm_heavy_ridge_shrinks() {
        let fp = solve_erm(2.0_f64, 0.5, 1e6, &cfg()).unwrap();
        assert!(fp.m.abs() < 1e-5 && fp.q < 1e-10, "{fp:?}");
        assert!(fp.residual <= 1e-7 * fp.q.sqrt());
        let c = fp.m / fp.q.sqrt();
        assert!(c.is_finite() && c > 0.0 && c < 1.0);
    }

    #[test]
    fn erm_lambda_zero_separable_is_rejected() {
        assert!(matches!(
            solve_erm(1.0_f64, 2.0, 0.0, &cfg()),
            Err(Error::SeparableRegime { .. })
        ));
        assert!(matches!(
            solve_erm(50.0_f64, 0.0, 0.0, &cfg()),
            Err(Error::SeparableRegime { .. })
        ));
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let t = golden_section(0.0, 4.0, 1e-12, |x: f64| (x - 1.3).powi(2));
        assert!((t - 1.3).abs() < 1e-6);
    }
}
