//! Generalized approximate message passing for the probit teacher-student
//! model, with a Bayes-optimal and a logistic-ERM output channel.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::montecarlo::for_each_test_point;
use crate::probit_model::{probit_label, sigma_star, Dataset};
use crate::rng;
use crate::scalar::{dot, Scalar};
use crate::special::mills_ratio;
use crate::state_evolution::{logistic_loss_curvature, prox_logistic};

/// Floor applied to variances and to `κ + A`.
pub const VARIANCE_FLOOR: f64 = 1e-11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    BayesProbit,
    LogisticErm,
}

/// Output-channel denoiser `f_out(y, ω, V)` and its ω-derivative.
pub trait ChannelDenoiser<T: Scalar> {
    fn kind(&self) -> ChannelKind;

    /// Returns `(f_out, ∂ω f_out)`.
    fn eval(&self, y: T, omega: T, v: T) -> (T, T);

    fn f_out(&self, y: T, omega: T, v: T) -> T {
        self.eval(y, omega, v).0
    }
}

/// Probit posterior channel with teacher noise `tau`.
#[derive(Clone, Copy, Debug)]
pub struct BayesProbit<T> {
    pub tau: T,
}

impl<T: Scalar> ChannelDenoiser<T> for BayesProbit<T> {
    fn kind(&self) -> ChannelKind {
        ChannelKind::BayesProbit
    }

    fn eval(&self, y: T, omega: T, v: T) -> (T, T) {
        f_out_bayes_with_derivative(y, omega, v, self.tau)
    }
}

/// Logistic-loss channel (MAP / ERM).
#[derive(Clone, Copy, Debug, Default)]
pub struct LogisticErm;

impl<T: Scalar> ChannelDenoiser<T> for LogisticErm {
    fn kind(&self) -> ChannelKind {
        ChannelKind::LogisticErm
    }

    fn eval(&self, y: T, omega: T, v: T) -> (T, T) {
        f_out_erm_with_derivative(y, omega, v)
    }
}

/// `∂ω ln Z_out` for `Z_out = ½ erfc(−yω/√(2(V + τ²)))`.
pub fn f_out_bayes<T: Scalar>(y: T, omega: T, v: T, tau: T) -> T {
    f_out_bayes_with_derivative(y, omega, v, tau).0
}

pub fn f_out_bayes_with_derivative<T: Scalar>(y: T, omega: T, v: T, tau: T) -> (T, T) {
    let s2 = v + tau * tau;
    let s = s2.sqrt();
    let t = y * omega / s;
    let r = mills_ratio(t);
    (y * r / s, -(r / s2) * (t + r))
}

/// `(prox_{Vℓ(y,·)}(ω) − ω) / V` for the logistic loss.
pub fn f_out_erm<T: Scalar>(y: T, omega: T, v: T) -> T {
    f_out_erm_with_derivative(y, omega, v).0
}

pub fn f_out_erm_with_derivative<T: Scalar>(y: T, omega: T, v: T) -> (T, T) {
    let z = prox_logistic(y, omega, v);
    let curv = logistic_loss_curvature(z);
    ((z - omega) / v, -curv / (T::one() + v * curv))
}

/// Iteration state. `A` and `b` are recomputed every sweep and not kept.
#[derive(Clone, Debug)]
pub struct GampState<T> {
    pub w_hat: Vec<T>,
    pub c_hat: Vec<T>,
    pub g: Vec<T>,
    pub omega: Vec<T>,
    pub v: Vec<T>,
    pub iteration: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GampResult<T: Scalar> {
    pub w_hat: Vec<T>,
    pub c_hat: Vec<T>,
    pub converged: bool,
    pub iterations_used: usize,
    pub final_delta: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GampConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Weight of the previous iterate when mixing `(ŵ, ĉ)`.
    pub damping: f64,
    /// Seed for the random initialization `ŵ⁰ ~ N(0, σ_w² I)`.
    pub init_seed: u64,
    pub sigma_w: f64,
}

impl Default for GampConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-6,
            damping: 0.2,
            init_seed: 0,
            sigma_w: 1.0,
        }
    }
}

/// Diagnostics gathered during a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GampDiagnostics {
    /// Number of entries of `V`, `ĉ` or `κ + A` raised to [`VARIANCE_FLOOR`].
    pub clamped: usize,
    pub final_damping: f64,
    pub diverged: bool,
}

/// Runs GAMP on `data` with output channel `channel` and Gaussian prior of
/// precision `prior_lambda` (`1` for the Bayes prior, `λ` for ridge ERM).
pub fn run_gamp<T: Scalar, C: ChannelDenoiser<T>>(
    data: &Dataset<T>,
    channel: &C,
    prior_lambda: T,
    cfg: &GampConfig,
) -> Result<GampResult<T>> {
    run_gamp_with_diagnostics(data, channel, prior_lambda, cfg).map(|(r, _)| r)
}

pub fn run_gamp_with_diagnostics<T: Scalar, C: ChannelDenoiser<T>>(
    data: &Dataset<T>,
    channel: &C,
    prior_lambda: T,
    cfg: &GampConfig,
) -> Result<(GampResult<T>, GampDiagnostics)> {
    data.validate()?;
    if !(cfg.tol > 0.0) {
        return Err(invalid("tol must be positive"));
    }
    if !(0.0..1.0).contains(&cfg.damping) {
        return Err(invalid("damping must lie in [0, 1)"));
    }
    if !(prior_lambda >= T::zero()) {
        return Err(invalid("prior precision must be non-negative"));
    }
    let (n, d) = (data.n(), data.d());
    let x = &data.x;
    let x2: Matrix<T> = x.squared();
    let floor = T::c(VARIANCE_FLOOR);

    let mut init = rng::aux_stream(cfg.init_seed, 0);
    let mut st = GampState {
        w_hat: (0..d).map(|_| T::c(cfg.sigma_w * rng::normal(&mut init))).collect(),
        c_hat: vec![T::one(); d],
        g: vec![T::zero(); n],
        omega: vec![T::zero(); n],
        v: vec![T::zero(); n],
        iteration: 0,
    };
    let mut diag = GampDiagnostics {
        final_damping: cfg.damping,
        ..Default::default()
    };
    let mut damping = T::c(cfg.damping);
    let mut dg = vec![T::zero(); n];
    let mut first_delta: Option<T> = None;
    let mut last_delta = T::infinity();
    let mut rises = 0usize;
    let mut converged = false;

    while st.iteration < cfg.max_iter {
        // Channel: V = X² ĉ, ω = X ŵ − V ⊙ g_prev.
        st.v = x2.matvec(&st.c_hat);
        for v in st.v.iter_mut() {
            if !(*v > floor) {
                *v = floor;
                diag.clamped += 1;
            }
        }
        let xw = x.matvec(&st.w_hat);
        for mu in 0..n {
            st.omega[mu] = xw[mu] - st.v[mu] * st.g[mu];
        }
        for mu in 0..n {
            let (g, dgi) = channel.eval(data.y[mu], st.omega[mu], st.v[mu]);
            st.g[mu] = g;
            dg[mu] = dgi;
        }
        // Prior: A = −(X²)ᵀ ∂g, b = Xᵀ g + A ⊙ ŵ.
        let neg_dg: Vec<T> = dg.iter().map(|&v| -v).collect();
        let mut a = x2.matvec_t(&neg_dg);
        let xg = x.matvec_t(&st.g);
        let mut delta = T::zero();
        for i in 0..d {
            if !(a[i] > floor) {
                a[i] = floor;
                diag.clamped += 1;
            }
            let b = xg[i] + a[i] * st.w_hat[i];
            let mut prec = prior_lambda + a[i];
            if !(prec > floor) {
                prec = floor;
                diag.clamped += 1;
            }
            let w_new = b / prec;
            let c_new = (T::one() / prec).max(floor);
            let w_mixed = (T::one() - damping) * w_new + damping * st.w_hat[i];
            delta = delta.max((w_mixed - st.w_hat[i]).abs());
            st.w_hat[i] = w_mixed;
            st.c_hat[i] = (T::one() - damping) * c_new + damping * st.c_hat[i];
        }
        st.iteration += 1;
        if !delta.is_finite() || st.w_hat.iter().any(|v| !v.is_finite()) {
            diag.diverged = true;
            last_delta = delta;
            break;
        }
        let d0 = *first_delta.get_or_insert(delta);
        if delta > T::c(10.0) * d0 && st.iteration > 1 {
            diag.diverged = true;
            last_delta = delta;
            break;
        }
        // Two consecutive increases are treated as oscillation.
        if delta > last_delta {
            rises += 1;
            if rises >= 2 && damping < T::c(0.5) {
                damping = T::c(0.5);
                diag.final_damping = 0.5;
            }
        } else {
            rises = 0;
        }
        last_delta = delta;
        if delta <= T::c(cfg.tol) {
            converged = true;
            break;
        }
    }
    Ok((
        GampResult {
            w_hat: st.w_hat,
            c_hat: st.c_hat,
            converged,
            iterations_used: st.iteration,
            final_delta: last_delta,
        },
        diag,
    ))
}

/// Bayes-optimal confidence `σ⋆(ŵᵀx / √(τ² + ĉᵀ(x⊙x)))`.
pub fn predict_bayes<T: Scalar>(x: &[T], result: &GampResult<T>, tau: T) -> T {
    let num = dot(&result.w_hat, x);
    let var = tau * tau + result.c_hat.iter().zip(x).map(|(&c, &xi)| c * xi * xi).sum::<T>();
    sigma_star(num, var.sqrt())
}

/// Monte-Carlo test error of thresholding [`predict_bayes`] at ½, on
/// `n_test` fresh points drawn from auxiliary stream 0 of `seed`.
pub fn bayes_test_error<T: Scalar>(result: &GampResult<T>, w_star: &[T], tau: T, n_test: usize, seed: u64) -> T {
    let mut errors = 0usize;
    for_each_test_point(w_star.len(), n_test, seed, 0, |x: &[T], xi| {
        let y = probit_label(dot(w_star, x), tau, xi);
        let yhat = if predict_bayes(x, result, tau) >= T::c(0.5) {
            T::one()
        } else {
            -T::one()
        };
        if y != yhat {
            errors += 1;
        }
    });
    T::from_usize_lossy(errors) / T::from_usize_lossy(n_test.max(1))
}
