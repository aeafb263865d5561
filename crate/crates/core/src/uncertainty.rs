//! Closed-form uncertainty objects: the joint density of the teacher, Bayes
//! and ERM confidences, its two-dimensional marginals, calibration curves and
//! conditional moments.
//!
//! The three pre-activations `(z, η, ω)` (teacher, Bayes, ERM) are jointly
//! Gaussian with covariance
//!
//! ```text
//!     ⎡ 1     q_bo  m     ⎤
//! Σ = ⎢ q_bo  q_bo  m     ⎥
//!     ⎣ m     m     q_erm ⎦
//! ```
//!
//! and the confidences are `f⋆ = Φ(z/τ)`, `f̂_bo = Φ(η/τ′)` with
//! `τ′² = τ² + 1 − q_bo`, and `f̂_erm = σ(ω)`. The structure of `Σ` means
//! `z = η + ζ` with `ζ ~ N(0, 1 − q_bo)` independent of `(η, ω)`, which the
//! cell-probability routines exploit.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{GaussHermite, GaussLegendre};
use crate::scalar::Scalar;
use crate::special::{log_logistic_derivative, log_norm_pdf, logistic, logit, norm_cdf, norm_quantile};
use crate::state_evolution::Overlaps;

/// Probabilities are clamped to `[P_CLAMP, 1 − P_CLAMP]` before inverting a link.
pub const P_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct JointGaussianSpec<T: Scalar> {
    pub sigma: [[T; 3]; 3],
    pub tau: T,
    pub tau_prime: T,
}

impl<T: Scalar> JointGaussianSpec<T> {
    pub fn new(q_bo: T, m: T, q_erm: T, tau: T) -> Result<Self> {
        if !(q_bo >= T::zero() && q_bo <= T::one()) {
            return Err(invalid(format!("q_bo = {q_bo} outside [0, 1]")));
        }
        if !(q_erm > T::zero()) {
            return Err(invalid("q_erm must be positive"));
        }
        if !(tau >= T::zero()) {
            return Err(invalid("tau must be non-negative"));
        }
        let sigma = [[T::one(), q_bo, m], [q_bo, q_bo, m], [m, m, q_erm]];
        let spec = Self {
            sigma,
            tau,
            tau_prime: (tau * tau + T::one() - q_bo).sqrt(),
        };
        // Positive semidefinite iff the Schur complements are non-negative.
        let tol = T::c(1e-12);
        if q_bo > T::zero() && q_bo * q_erm - m * m < -tol {
            return Err(invalid("Σ is not positive semidefinite (q_bo q_erm < m²)"));
        }
        Ok(spec)
    }

    pub fn from_overlaps(o: &Overlaps<T>, tau: T) -> Result<Self> {
        Self::new(o.q_bo, o.m, o.q_erm, tau)
    }

    pub fn q_bo(&self) -> T {
        self.sigma[1][1]
    }

    pub fn m(&self) -> T {
        self.sigma[0][2]
    }

    pub fn q_erm(&self) -> T {
        self.sigma[2][2]
    }

    /// `det Σ = (1 − q_bo)(q_bo q_erm − m²)`
    pub fn det(&self) -> T {
        (T::one() - self.q_bo()) * (self.q_bo() * self.q_erm() - self.m() * self.m())
    }

    fn require_density(&self) -> Result<()> {
        if !(self.tau > T::zero()) {
            return Err(invalid(
                "densities need tau > 0 (the teacher link is a step at tau = 0)",
            ));
        }
        if !(self.det() > T::zero()) {
            return Err(Error::Singular(
                "Σ is singular; evaluate a two-dimensional marginal instead".into(),
            ));
        }
        Ok(())
    }

    fn link(&self, axis: Axis) -> Link<T> {
        match axis {
            Axis::Teacher => Link::Probit(self.tau),
            Axis::Bayes => Link::Probit(self.tau_prime),
            Axis::Erm => Link::Logit,
        }
    }

    /// Conditional law of `η` and `z` given `ω`, and of `ω` given `η`.
    fn structure(&self) -> Structure<T> {
        let (q, m, qe) = (self.q_bo(), self.m(), self.q_erm());
        Structure {
            sd_eta: q.sqrt(),
            sd_zeta: (T::one() - q).max(T::zero()).sqrt(),
            k: m / q,
            sd_omega_eta: (qe - m * m / q).max(T::zero()).sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Axis {
    Teacher,
    Bayes,
    Erm,
}

/// A link `p = F(x)` between a pre-activation and a confidence.
#[derive(Clone, Copy, Debug)]
enum Link<T> {
    /// `Φ(x / scale)`
    Probit(T),
    /// `σ(x)`
    Logit,
}

impl<T: Scalar> Link<T> {
    fn clamp(p: T) -> T {
        p.max(T::c(P_CLAMP)).min(T::one() - T::c(P_CLAMP))
    }

    /// `(F⁻¹(p), ln |dF⁻¹/dp|)`
    fn invert(&self, p: T) -> (T, T) {
        let p = Self::clamp(p);
        match *self {
            Link::Probit(s) => {
                let u = norm_quantile(p);
                (s * u, s.ln() - log_norm_pdf(u))
            }
            Link::Logit => {
                let x = logit(p);
                (x, -log_logistic_derivative(x))
            }
        }
    }

    /// Pre-activation threshold for a bin edge, with the open ends at ±∞.
    fn edge(&self, p: T) -> T {
        if p <= T::zero() {
            T::neg_infinity()
        } else if p >= T::one() {
            T::infinity()
        } else {
            match *self {
                Link::Probit(s) => s * norm_quantile(p),
                Link::Logit => logit(p),
            }
        }
    }

    fn forward(&self, x: T) -> T {
        match *self {
            Link::Probit(s) => norm_cdf(x / s),
            Link::Logit => logistic(x),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Structure<T> {
    sd_eta: T,
    sd_zeta: T,
    k: T,
    sd_omega_eta: T,
}

fn log_gauss_3<T: Scalar>(x: [T; 3], s: &[[T; 3]; 3]) -> Result<T> {
    let inv = inverse_3(s)?;
    let mut quad = T::zero();
    for i in 0..3 {
        for j in 0..3 {
            quad += x[i] * inv.0[i][j] * x[j];
        }
    }
    let ln2pi = (T::c(2.0) * T::PI()).ln();
    Ok(-quad / T::c(2.0) - T::c(1.5) * ln2pi - inv.1.ln() / T::c(2.0))
}

/// `(Σ⁻¹, det Σ)` for a 3×3 symmetric matrix.
fn inverse_3<T: Scalar>(s: &[[T; 3]; 3]) -> Result<([[T; 3]; 3], T)> {
    let c00 = s[1][1] * s[2][2] - s[1][2] * s[2][1];
    let c01 = s[1][2] * s[2][0] - s[1][0] * s[2][2];
    let c02 = s[1][0] * s[2][1] - s[1][1] * s[2][0];
    let det = s[0][0] * c00 + s[0][1] * c01 + s[0][2] * c02;
    if !(det > T::zero()) {
        return Err(Error::Singular(format!("det Σ = {det}")));
    }
    let c11 = s[0][0] * s[2][2] - s[0][2] * s[2][0];
    let inv = [
        [
            c00 / det,
            (s[0][2] * s[2][1] - s[0][1] * s[2][2]) / det,
            (s[0][1] * s[1][2] - s[0][2] * s[1][1]) / det,
        ],
        [c01 / det, c11 / det, (s[0][2] * s[1][0] - s[0][0] * s[1][2]) / det],
        [
            c02 / det,
            (s[0][1] * s[2][0] - s[0][0] * s[2][1]) / det,
            (s[0][0] * s[1][1] - s[0][1] * s[1][0]) / det,
        ],
    ];
    Ok((inv, det))
}

fn log_gauss_2<T: Scalar>(x: [T; 2], s: [[T; 2]; 2]) -> Result<T> {
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    if !(det > T::zero()) {
        return Err(Error::Singular(format!("2×2 determinant {det}")));
    }
    let quad = (s[1][1] * x[0] * x[0] - T::c(2.0) * s[0][1] * x[0] * x[1] + s[0][0] * x[1] * x[1]) / det;
    Ok(-quad / T::c(2.0) - (T::c(2.0) * T::PI()).ln() - det.ln() / T::c(2.0))
}

/// `ln ρ(a, b, c)` of the joint density of `(f⋆, f̂_bo, f̂_erm)`.
pub fn log_joint_density<T: Scalar>(a: T, b: T, c: T, spec: &JointGaussianSpec<T>) -> Result<T> {
    spec.require_density()?;
    check_open_unit(&[a, b, c])?;
    let (x0, j0) = spec.link(Axis::Teacher).invert(a);
    let (x1, j1) = spec.link(Axis::Bayes).invert(b);
    let (x2, j2) = spec.link(Axis::Erm).invert(c);
    Ok(log_gauss_3([x0, x1, x2], &spec.sigma)? + j0 + j1 + j2)
}

/// Joint density `ρ(a, b, c)` of `(f⋆, f̂_bo, f̂_erm)`.
pub fn joint_density<T: Scalar>(a: T, b: T, c: T, spec: &JointGaussianSpec<T>) -> Result<T> {
    log_joint_density(a, b, c, spec).map(T::exp)
}

fn check_open_unit<T: Scalar>(ps: &[T]) -> Result<()> {
    if ps.iter().all(|&p| p > T::zero() && p < T::one()) {
        Ok(())
    } else {
        Err(invalid("confidences must lie strictly inside (0, 1)"))
    }
}

/// Which two confidences a marginal describes (first = horizontal axis).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginalPair {
    /// `(f⋆, f̂_erm)`
    StarErm,
    /// `(f̂_bo, f̂_erm)`
    BoErm,
    /// `(f⋆, f̂_bo)`
    StarBo,
}

impl MarginalPair {
    fn axes(self) -> (Axis, Axis) {
        match self {
            MarginalPair::StarErm => (Axis::Teacher, Axis::Erm),
            MarginalPair::BoErm => (Axis::Bayes, Axis::Erm),
            MarginalPair::StarBo => (Axis::Teacher, Axis::Bayes),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MarginalPair::StarErm => "star-erm",
            MarginalPair::BoErm => "bo-erm",
            MarginalPair::StarBo => "star-bo",
        }
    }
}

impl std::str::FromStr for MarginalPair {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "star-erm" => Ok(Self::StarErm),
            "bo-erm" => Ok(Self::BoErm),
            "star-bo" => Ok(Self::StarBo),
            _ => Err(invalid(format!("unknown marginal pair {s:?}"))),
        }
    }
}

fn axis_index(a: Axis) -> usize {
    match a {
        Axis::Teacher => 0,
        Axis::Bayes => 1,
        Axis::Erm => 2,
    }
}

fn sub_cov<T: Scalar>(spec: &JointGaussianSpec<T>, pair: MarginalPair) -> [[T; 2]; 2] {
    let (a, b) = pair.axes();
    let (i, j) = (axis_index(a), axis_index(b));
    [
        [spec.sigma[i][i], spec.sigma[i][j]],
        [spec.sigma[j][i], spec.sigma[j][j]],
    ]
}

fn require_pair<T: Scalar>(spec: &JointGaussianSpec<T>, pair: MarginalPair) -> Result<()> {
    if pair != MarginalPair::BoErm && !(spec.tau > T::zero()) {
        return Err(invalid("teacher densities need tau > 0"));
    }
    let s = sub_cov(spec, pair);
    if !(s[0][0] * s[1][1] - s[0][1] * s[1][0] > T::zero()) {
        return Err(Error::Singular(format!("{} covariance is singular", pair.name())));
    }
    Ok(())
}

/// `ln` of the two-dimensional marginal density at `(u, v)`.
pub fn log_marginal_density_2d<T: Scalar>(pair: MarginalPair, u: T, v: T, spec: &JointGaussianSpec<T>) -> Result<T> {
    require_pair(spec, pair)?;
    check_open_unit(&[u, v])?;
    let (a, b) = pair.axes();
    let (x0, j0) = spec.link(a).invert(u);
    let (x1, j1) = spec.link(b).invert(v);
    Ok(log_gauss_2([x0, x1], sub_cov(spec, pair))? + j0 + j1)
}

pub fn marginal_density_2d<T: Scalar>(pair: MarginalPair, u: T, v: T, spec: &JointGaussianSpec<T>) -> Result<T> {
    log_marginal_density_2d(pair, u, v, spec).map(T::exp)
}

/// Calibration of the logistic classifier against the teacher,
/// `Δ_p = p − E[f⋆ | f̂_erm = p] = p − Φ((m/q)·logit(p) / √(1 − m²/q + τ²))`.
///
/// The argument of `Φ` carries a positive sign: this reproduces the
/// binned Monte-Carlo estimate (overconfidence `Δ_p > 0` for `p > ½` at
/// `λ = 0`) and the `λ → ∞` limit `Δ_p → p − 1`.
pub fn calibration_erm<T: Scalar>(p: T, m: T, q_erm: T, tau: T) -> Result<T> {
    if !(q_erm > T::zero()) {
        return Err(invalid("q_erm must be positive"));
    }
    let var = T::one() - m * m / q_erm + tau * tau;
    if !(var > T::zero()) {
        return Err(invalid("m²/q_erm ≥ 1 + τ² is not a valid overlap"));
    }
    check_open_unit(&[p])?;
    Ok(p - norm_cdf(m / q_erm * logit(p) / var.sqrt()))
}

/// Calibration of the logistic classifier against the Bayes-optimal one,
/// `Δ̃_p = p − E[f̂_bo | f̂_erm = p]`, from the conditional law
/// `η | ω = logit(p) ~ N((m/q_erm) logit(p), q_bo − m²/q_erm)` and the link
/// `Φ(·/τ′)`.
pub fn calibration_erm_vs_bayes<T: Scalar>(p: T, m: T, q_erm: T, q_bo: T, tau: T) -> Result<T> {
    if !(q_erm > T::zero()) {
        return Err(invalid("q_erm must be positive"));
    }
    let cond_var = q_bo - m * m / q_erm;
    if cond_var < T::zero() {
        return Err(invalid(format!("negative conditional variance {cond_var}")));
    }
    check_open_unit(&[p])?;
    let tau_prime2 = tau * tau + T::one() - q_bo;
    let mean = m / q_erm * logit(p);
    // E[Φ(X/τ′)] for X ~ N(μ, s²) equals Φ(μ/√(τ′² + s²)).
    Ok(p - norm_cdf(mean / (tau_prime2 + cond_var).sqrt()))
}

/// Calibration of the Bayes-optimal classifier, `p − E[f⋆ | f̂_bo = p]`,
/// by Gauss-Hermite quadrature over `z | η ~ N(η, 1 − q_bo)` at
/// `η = τ′ Φ⁻¹(p)`. Vanishes identically for every `(q_bo, τ)`.
pub fn calibration_bayes<T: Scalar>(p: T, q_bo: T, tau: T, rule: &GaussHermite<T>) -> Result<T> {
    check_open_unit(&[p])?;
    if !(q_bo >= T::zero() && q_bo <= T::one()) {
        return Err(invalid("q_bo outside [0, 1]"));
    }
    if !(tau > T::zero()) {
        return Err(invalid("tau must be positive"));
    }
    let tau_prime = (tau * tau + T::one() - q_bo).sqrt();
    let eta = tau_prime * norm_quantile(p);
    let sd = (T::one() - q_bo).sqrt();
    // E[Φ(z/τ)] = P(z + τξ > 0); integrate over whichever Gaussian gives the
    // smoother integrand.
    let mean = if sd <= tau {
        rule.expect_normal(eta, sd, |z| norm_cdf(z / tau))
    } else {
        rule.expect_normal(T::zero(), tau, |u| norm_cdf((eta + u) / sd))
    };
    Ok(p - mean)
}

/// `p − E[f⋆ | f̂_erm ∈ [lo, hi]]`: the calibration gap a binned Monte-Carlo
/// estimate converges to. The conditional mean `E[f⋆ | ω]` is averaged over
/// `ω ~ N(0, q_erm)` restricted to `[logit(lo), logit(hi)]`. The same value
/// holds with `f̂_bo` in place of `f⋆`, whose conditional mean is identical.
pub fn calibration_erm_binned<T: Scalar>(p: T, lo: T, hi: T, m: T, q_erm: T, tau: T) -> Result<T> {
    if !(lo >= T::zero() && hi <= T::one() && lo < hi) {
        return Err(invalid("bin must satisfy 0 ≤ lo < hi ≤ 1"));
    }
    // Validates the overlaps.
    calibration_erm(T::c(0.5), m, q_erm, tau)?;
    let s0 = (T::one() - m * m / q_erm + tau * tau).sqrt();
    let sd = q_erm.sqrt();
    let (a, b) = (
        Link::<T>::Logit.edge(lo).max(-T::c(12.0) * sd),
        Link::<T>::Logit.edge(hi).min(T::c(12.0) * sd),
    );
    if !(b > a) {
        return Err(invalid("bin carries no probability mass"));
    }
    let gl = GaussLegendre::<T>::new(32);
    let panels = 16;
    let mass = gl.integrate_composite(a, b, panels, |w| (-(w * w) / (T::c(2.0) * q_erm)).exp());
    let first = gl.integrate_composite(a, b, panels, |w| {
        (-(w * w) / (T::c(2.0) * q_erm)).exp() * norm_cdf(m / q_erm * w / s0)
    });
    if !(mass > T::zero()) {
        return Err(invalid("bin carries no probability mass"));
    }
    Ok(p - first / mass)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationKind {
    VsTeacher,
    VsBayes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CalibrationCurve<T: Scalar> {
    pub p_grid: Vec<T>,
    pub delta: Vec<T>,
    pub kind: CalibrationKind,
}

pub fn calibration_curve<T: Scalar>(
    kind: CalibrationKind,
    p_grid: &[T],
    spec: &JointGaussianSpec<T>,
) -> Result<CalibrationCurve<T>> {
    let delta = p_grid
        .iter()
        .map(|&p| match kind {
            CalibrationKind::VsTeacher => calibration_erm(p, spec.m(), spec.q_erm(), spec.tau),
            CalibrationKind::VsBayes => calibration_erm_vs_bayes(p, spec.m(), spec.q_erm(), spec.q_bo(), spec.tau),
        })
        .collect::<Result<_>>()?;
    Ok(CalibrationCurve {
        p_grid: p_grid.to_vec(),
        delta,
        kind,
    })
}

/// Evenly spaced interior grid `1/(n+1), …, n/(n+1)`.
pub fn p_grid<T: Scalar>(n: usize) -> Vec<T> {
    (1..=n)
        .map(|k| T::from_usize_lossy(k) / T::from_usize_lossy(n + 1))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Teacher,
    Bayes,
}

/// Mean and variance of the target confidence given `f̂_erm = p`.
///
/// With `X | ω ~ N(μ, s²)` the target's pre-activation and `Φ(·/t)` its link,
/// the mean is `Φ(h)` and the second moment `Φ₂(h, h; r)` with
/// `h = μ/√(t² + s²)` and `r = s²/(t² + s²)`; the bivariate normal CDF is
/// reduced to `Φ(h)² + (1/2π) ∫₀^{asin r} exp(−h²/(1 + sin θ)) dθ` and
/// integrated by Gauss-Legendre.
pub fn conditional_moments<T: Scalar>(target: Target, p: T, spec: &JointGaussianSpec<T>) -> Result<(T, T)> {
    check_open_unit(&[p])?;
    let (m, qe) = (spec.m(), spec.q_erm());
    let mu = m / qe * logit(p);
    let (s2, t) = match target {
        Target::Teacher => (T::one() - m * m / qe, spec.tau),
        Target::Bayes => (spec.q_bo() - m * m / qe, spec.tau_prime),
    };
    if s2 < T::zero() {
        return Err(invalid("negative conditional variance"));
    }
    let total = t * t + s2;
    if !(total > T::zero()) {
        // Deterministic hard step.
        let v = if mu > T::zero() {
            T::one()
        } else if mu < T::zero() {
            T::zero()
        } else {
            T::c(0.5)
        };
        return Ok((v, T::zero()));
    }
    let h = mu / total.sqrt();
    let r = s2 / total;
    let mean = norm_cdf(h);
    let gl = GaussLegendre::<T>::new(24);
    let extra = gl.integrate(T::zero(), r.min(T::one()).asin(), |th| {
        (-h * h / (T::one() + th.sin())).exp()
    }) / (T::c(2.0) * T::PI());
    let var = extra.max(T::zero());
    Ok((mean, var))
}

// --- cell probabilities -------------------------------------------------

/// Pre-activation interval; `None` means unrestricted.
type Interval<T> = Option<(T, T)>;

/// `P(z ∈ Z, η ∈ H, ω ∈ W)` for the joint Gaussian, computed as a
/// one-dimensional integral over `η` of `N(η|0, q_bo) · P(z ∈ Z | η) · P(ω ∈ W | η)`
/// (given `η`, `z` and `ω` are independent).
fn box_probability<T: Scalar>(
    st: &Structure<T>,
    gl: &GaussLegendre<T>,
    z: Interval<T>,
    eta: Interval<T>,
    omega: Interval<T>,
) -> T {
    let ten = T::c(10.0);
    let mut lo = -ten * st.sd_eta;
    let mut hi = ten * st.sd_eta;
    let mut scale = st.sd_eta;
    if let Some((a, b)) = eta {
        lo = lo.max(a);
        hi = hi.min(b);
    }
    if let Some((a, b)) = z {
        lo = lo.max(a - ten * st.sd_zeta);
        hi = hi.min(b + ten * st.sd_zeta);
        scale = scale.min(st.sd_zeta);
    }
    if let Some((a, b)) = omega {
        if st.k.abs() > T::c(1e-300) {
            let (ea, eb) = ((a - ten * st.sd_omega_eta) / st.k, (b + ten * st.sd_omega_eta) / st.k);
            lo = lo.max(ea.min(eb));
            hi = hi.min(ea.max(eb));
            scale = scale.min(st.sd_omega_eta / st.k.abs());
        }
    }
    if !(hi > lo) {
        return T::zero();
    }
    let window = |v: T, sd: T, (a, b): (T, T)| {
        if sd > T::zero() {
            norm_cdf((b - v) / sd) - norm_cdf((a - v) / sd)
        } else if v >= a && v < b {
            T::one()
        } else {
            T::zero()
        }
    };
    let h = scale.max(T::c(1e-9)) * T::c(0.5);
    let panels = (((hi - lo) / h).ceil().f64() as usize).clamp(1, 4000);
    gl.integrate_composite(lo, hi, panels, |v| {
        let mut f = (-(v * v) / (T::c(2.0) * st.sd_eta * st.sd_eta)).exp() / (st.sd_eta * (T::c(2.0) * T::PI()).sqrt());
        if let Some(zb) = z {
            f *= window(v, st.sd_zeta, zb);
        }
        if let Some(wb) = omega {
            f *= window(st.k * v, st.sd_omega_eta, wb);
        }
        f
    })
    .max(T::zero())
}

/// Probability mass of `(f⋆, f̂_bo, f̂_erm)` in every cell of a regular grid
/// with `n` bins per axis on `[0, 1]³`, indexed `[i_a][i_b][i_c]` flattened
/// row-major.
pub fn joint_cell_masses<T: Scalar>(spec: &JointGaussianSpec<T>, n: usize) -> Result<Vec<T>> {
    spec.require_density()?;
    let st = spec.structure();
    let gl = GaussLegendre::<T>::new(8);
    let ea = bin_edges(spec.link(Axis::Teacher), n);
    let eb = bin_edges(spec.link(Axis::Bayes), n);
    let ec = bin_edges(spec.link(Axis::Erm), n);
    let mut out = vec![T::zero(); n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out[(i * n + j) * n + k] = box_probability(
                    &st,
                    &gl,
                    Some((ea[i], ea[i + 1])),
                    Some((eb[j], eb[j + 1])),
                    Some((ec[k], ec[k + 1])),
                );
            }
        }
    }
    Ok(out)
}

/// Cell masses of a two-dimensional marginal on an `n × n` grid, indexed
/// `[i_u][i_v]` flattened row-major.
pub fn marginal_cell_masses<T: Scalar>(pair: MarginalPair, spec: &JointGaussianSpec<T>, n: usize) -> Result<Vec<T>> {
    require_pair(spec, pair)?;
    if !(spec.q_bo() > T::zero() && spec.q_bo() < T::one()) {
        return Err(invalid("cell masses need 0 < q_bo < 1"));
    }
    let st = spec.structure();
    let gl = GaussLegendre::<T>::new(8);
    let (a, b) = pair.axes();
    let eu = bin_edges(spec.link(a), n);
    let ev = bin_edges(spec.link(b), n);
    let mut out = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut boxes: [Interval<T>; 3] = [None, None, None];
            boxes[axis_index(a)] = Some((eu[i], eu[i + 1]));
            boxes[axis_index(b)] = Some((ev[j], ev[j + 1]));
            out[i * n + j] = box_probability(&st, &gl, boxes[0], boxes[1], boxes[2]);
        }
    }
    Ok(out)
}

fn bin_edges<T: Scalar>(link: Link<T>, n: usize) -> Vec<T> {
    (0..=n)
        .map(|k| link.edge(T::from_usize_lossy(k) / T::from_usize_lossy(n)))
        .collect()
}

/// Pre-activation bin edges for `n` equal-width confidence bins on the
/// teacher, Bayes and ERM axes; used to histogram samples consistently with
/// the cell masses.
pub fn confidence_bin_edges<T: Scalar>(spec: &JointGaussianSpec<T>, n: usize) -> [Vec<T>; 3] {
    [
        bin_edges(spec.link(Axis::Teacher), n),
        bin_edges(spec.link(Axis::Bayes), n),
        bin_edges(spec.link(Axis::Erm), n),
    ]
}

/// Draws pre-activations `(z, η, ω)` from `N(0, Σ)` given three independent
/// standard normals.
pub fn sample_preactivations<T: Scalar>(spec: &JointGaussianSpec<T>, g: [T; 3]) -> [T; 3] {
    let st = spec.structure();
    let eta = st.sd_eta * g[0];
    [eta + st.sd_zeta * g[1], eta, st.k * eta + st.sd_omega_eta * g[2]]
}

/// Maps pre-activations to confidences `(f⋆, f̂_bo, f̂_erm)`.
pub fn confidences<T: Scalar>(spec: &JointGaussianSpec<T>, x: [T; 3]) -> [T; 3] {
    [
        spec.link(Axis::Teacher).forward(x[0]),
        spec.link(Axis::Bayes).forward(x[1]),
        spec.link(Axis::Erm).forward(x[2]),
    ]
}

/// Graded midpoint mesh on `(0, 1)` for one confidence axis: edges are the
/// images of `n + 1` equally spaced standardized pre-activations in
/// `[−span, span]`, so cells shrink towards the corners where mass piles up.
/// Returns `(midpoints, widths)`.
fn graded_axis<T: Scalar>(link: Link<T>, sd: T, n: usize, span: T) -> (Vec<T>, Vec<T>) {
    let edges: Vec<T> = (0..=n)
        .map(|k| {
            let t = -span + T::c(2.0) * span * T::from_usize_lossy(k) / T::from_usize_lossy(n);
            link.forward(sd * t)
        })
        .collect();
    // Cells that collapse in floating point carry no representable mass.
    edges
        .windows(2)
        .filter(|e| e[1] > e[0] && e[0] > T::zero() && e[1] < T::one())
        .map(|e| ((e[0] + e[1]) / T::c(2.0), e[1] - e[0]))
        .unzip()
}

/// Cells per axis so that each graded cell spans at most half the
/// conditional standard deviation of that pre-activation given the others.
fn resolved_cells<T: Scalar>(marginal_sd: T, conditional_sd: T, span: T, n_min: usize) -> usize {
    let need = (T::c(4.0) * span * marginal_sd / conditional_sd).ceil().f64();
    if need.is_finite() {
        (need as usize).clamp(n_min, 4000)
    } else {
        4000
    }
}

/// `∫∫∫ ρ(a, b, c) da db dc` by the midpoint rule on graded meshes with at
/// least `n` cells per axis (more along axes where the density is a narrow
/// ridge).
pub fn integrate_joint_density<T: Scalar>(spec: &JointGaussianSpec<T>, n: usize) -> Result<T> {
    spec.require_density()?;
    let span = T::c(8.5);
    let sds = [T::one(), spec.q_bo().sqrt(), spec.q_erm().sqrt()];
    let axes = [Axis::Teacher, Axis::Bayes, Axis::Erm];
    let (inv, det) = inverse_3(&spec.sigma)?;
    let mut pre = Vec::new();
    for (i, (ax, sd)) in axes.iter().zip(sds).enumerate() {
        let link = spec.link(*ax);
        let cells = resolved_cells(sd, T::one() / inv[i][i].sqrt(), span, n);
        let (mids, widths) = graded_axis(link, sd, cells, span);
        let inv: Vec<(T, T)> = mids
            .iter()
            .zip(&widths)
            .map(|(&p, &w)| {
                let (x, lj) = link.invert(p);
                (x, lj + w.ln())
            })
            .collect();
        pre.push(inv);
    }
    let log_norm = -T::c(1.5) * (T::c(2.0) * T::PI()).ln() - det.ln() / T::c(2.0);
    let mut total = T::zero();
    for &(x0, l0) in &pre[0] {
        for &(x1, l1) in &pre[1] {
            let base = inv[0][0] * x0 * x0 + T::c(2.0) * inv[0][1] * x0 * x1 + inv[1][1] * x1 * x1;
            let lin = T::c(2.0) * (inv[0][2] * x0 + inv[1][2] * x1);
            let outer = log_norm + l0 + l1;
            // Only cells within reach of the conditional mean of ω contribute.
            let centre = -lin / (T::c(2.0) * inv[2][2]);
            let reach = T::c(10.0) / inv[2][2].sqrt();
            let from = pre[2].partition_point(|&(x2, _)| x2 < centre - reach);
            let to = pre[2].partition_point(|&(x2, _)| x2 <= centre + reach);
            let mut row = T::zero();
            for &(x2, l2) in &pre[2][from..to] {
                let quad = base + lin * x2 + inv[2][2] * x2 * x2;
                row += (outer + l2 - quad / T::c(2.0)).exp();
            }
            total += row;
        }
    }
    Ok(total)
}

/// `∫∫ ρ_pair(u, v) du dv` by the midpoint rule on graded meshes.
pub fn integrate_marginal_density<T: Scalar>(pair: MarginalPair, spec: &JointGaussianSpec<T>, n: usize) -> Result<T> {
    require_pair(spec, pair)?;
    let (a, b) = pair.axes();
    let cov = sub_cov(spec, pair);
    let (mu, wu) = graded_axis(spec.link(a), cov[0][0].sqrt(), n, T::c(8.5));
    let (mv, wv) = graded_axis(spec.link(b), cov[1][1].sqrt(), n, T::c(8.5));
    let mut total = T::zero();
    for (&u, &du) in mu.iter().zip(&wu) {
        for (&v, &dv) in mv.iter().zip(&wv) {
            total += (log_marginal_density_2d(pair, u, v, spec)? + du.ln() + dv.ln()).exp();
        }
    }
    Ok(total)
}

/// `∫ ρ(a, b, c) dc` at fixed `(a, b)`, by the midpoint rule on a graded mesh.
pub fn integrate_out_erm<T: Scalar>(a: T, b: T, spec: &JointGaussianSpec<T>, n: usize) -> Result<T> {
    spec.require_density()?;
    let (mids, widths) = graded_axis(spec.link(Axis::Erm), spec.q_erm().sqrt(), n, T::c(12.0));
    let mut total = T::zero();
    for (&c, &w) in mids.iter().zip(&widths) {
        total += (log_joint_density(a, b, c, spec)? + w.ln()).exp();
    }
    Ok(total)
}
