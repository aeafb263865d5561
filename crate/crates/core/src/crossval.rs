//! Choice of the ridge strength: the minimizers `λ_error` and `λ_loss` of the
//! asymptotic test error and test logistic loss, and a holdout variant on a
//! finite dataset.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::erm::{minimize, ErmConfig};
use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::probit_model::Dataset;
use crate::rng;
use crate::scalar::{dot, norm_sq, Scalar};
use crate::special::logistic_loss;
use crate::state_evolution::{erm_error, erm_test_loss, golden_section, solve_erm_from, ErmFixedPoint, SEConfig};
use crate::uncertainty::calibration_erm;

/// Auxiliary stream used to shuffle the holdout split.
const HOLDOUT_STREAM: u64 = 7;
const MAX_SPLIT_ATTEMPTS: u64 = 10;
/// Relative resolution of the refined minimizers.
const LAMBDA_RTOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LambdaSweep<T: Scalar> {
    pub lambdas: Vec<T>,
    /// Test error per λ (NaN at failed points).
    pub errors: Vec<T>,
    /// Test logistic loss per λ (NaN at failed points).
    pub losses: Vec<T>,
    pub p_levels: Vec<T>,
    /// `calibrations[i][k]`: `Δ_p` at `lambdas[i]` and `p_levels[k]`.
    pub calibrations: Vec<Vec<T>>,
    pub lambda_error: T,
    pub lambda_loss: T,
    /// Error and loss at the refined minimizers.
    pub error_at_lambda_error: T,
    pub error_at_lambda_loss: T,
    pub loss_at_lambda_loss: T,
    /// Grid indices where the solver failed, with the reason.
    pub failed: Vec<(usize, String)>,
    pub error_unimodal: bool,
    pub loss_unimodal: bool,
}

/// `points` values log-spaced over `[min, max]`.
pub fn log_grid<T: Scalar>(min: T, max: T, points: usize) -> Result<Vec<T>> {
    if !(min > T::zero() && max >= min) || points == 0 {
        return Err(invalid("log grid needs 0 < min ≤ max and at least one point"));
    }
    if points == 1 {
        return Ok(vec![min]);
    }
    let (a, b) = (min.ln(), max.ln());
    let step = (b - a) / T::from_usize_lossy(points - 1);
    Ok((0..points)
        .map(|i| {
            if i == 0 {
                min
            } else if i + 1 == points {
                max
            } else {
                (a + step * T::from_usize_lossy(i)).exp()
            }
        })
        .collect())
}

/// The default grid: 40 points log-spaced in `[1e-4, 10]`.
pub fn default_grid<T: Scalar>() -> Vec<T> {
    log_grid(T::c(1e-4), T::c(10.0), 40).expect("valid constants")
}

/// Index of the smallest finite value; ties go to the smaller index.
fn argmin<T: Scalar>(values: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| v < values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Whether the finite values, in grid order, decrease then increase.
fn unimodal<T: Scalar>(values: &[T]) -> bool {
    let v: Vec<T> = values.iter().copied().filter(|x| x.is_finite()).collect();
    let mut rising = false;
    for w in v.windows(2) {
        if w[1] > w[0] {
            rising = true;
        } else if rising && w[1] < w[0] {
            return false;
        }
    }
    true
}

struct Point<T: Scalar> {
    fp: ErmFixedPoint<T>,
    error: T,
    loss: T,
}

fn evaluate<T: Scalar>(alpha: T, tau: T, lambda: T, cfg: &SEConfig, init: Option<(T, T, T)>) -> Result<Point<T>> {
    let fp = match solve_erm_from(alpha, tau, lambda, cfg, init) {
        Ok(fp) => fp,
        Err(e) if init.is_some() => solve_erm_from(alpha, tau, lambda, cfg, None).map_err(|_| e)?,
        Err(e) => return Err(e),
    };
    let error = erm_error(fp.m, fp.q, tau);
    let loss = erm_test_loss(fp.m, fp.q, tau, &cfg.rule());
    if !(error.is_finite() && loss.is_finite()) {
        return Err(Error::NonConvergence {
            what: "state evolution (non-finite test metrics)",
            iterations: fp.iterations,
            residual: fp.residual.f64(),
            last: vec![fp.m.f64(), fp.q.f64(), fp.v.f64()],
        });
    }
    Ok(Point { fp, error, loss })
}

/// Asymptotic test error and loss along `lambda_grid`, with both minimizers
/// refined by golden-section search in `log λ` between the neighbours of the
/// best grid point.
pub fn sweep<T: Scalar>(alpha: T, tau: T, lambda_grid: &[T], p_levels: &[T], cfg: &SEConfig) -> Result<LambdaSweep<T>> {
    cfg.validate()?;
    if lambda_grid.is_empty() || lambda_grid.iter().any(|&l| !(l > T::zero() && l.is_finite())) {
        return Err(invalid("lambda grid must be non-empty with every λ > 0"));
    }
    let mut errors = Vec::with_capacity(lambda_grid.len());
    let mut losses = Vec::with_capacity(lambda_grid.len());
    let mut calibrations: Vec<Vec<T>> = Vec::with_capacity(lambda_grid.len());
    let mut fixed_points: Vec<Option<(T, T, T)>> = Vec::with_capacity(lambda_grid.len());
    let mut failed = Vec::new();
    let mut warm = None;
    for (i, &lambda) in lambda_grid.iter().enumerate() {
        if let Some(j) = lambda_grid[..i].iter().position(|&l| l == lambda) {
            // Repeated λ: reuse the earlier result so ties are exact.
            errors.push(errors[j]);
            losses.push(losses[j]);
            calibrations.push(calibrations[j].clone());
            fixed_points.push(fixed_points[j]);
            continue;
        }
        match evaluate(alpha, tau, lambda, cfg, warm) {
            Ok(pt) => {
                let state = (pt.fp.m, pt.fp.q, pt.fp.v);
                warm = Some(state);
                fixed_points.push(Some(state));
                errors.push(pt.error);
                losses.push(pt.loss);
                calibrations.push(
                    p_levels
                        .iter()
                        .map(|&p| calibration_erm(p, pt.fp.m, pt.fp.q, tau))
                        .collect::<Result<Vec<T>>>()?,
                );
            }
            Err(e) => {
                failed.push((i, e.to_string()));
                fixed_points.push(None);
                errors.push(T::nan());
                losses.push(T::nan());
                calibrations.push(vec![T::nan(); p_levels.len()]);
            }
        }
    }
    let (Some(ie), Some(il)) = (argmin(&errors), argmin(&losses)) else {
        return Err(Error::NonConvergence {
            what: "lambda sweep (no grid point solved)",
            iterations: lambda_grid.len(),
            residual: f64::NAN,
            last: Vec::new(),
        });
    };
    let refine = |best: usize, metric: fn(&Point<T>) -> T| -> Result<(T, T, T, T)> {
        let here = lambda_grid[best];
        let mut lo = here;
        let mut hi = here;
        for &l in lambda_grid {
            if l < here && (lo == here || l > lo) {
                lo = l;
            }
            if l > here && (hi == here || l < hi) {
                hi = l;
            }
        }
        let init = fixed_points[best];
        // Search in t = ln(λ/λ_grid) so the tolerance is relative in λ.
        let at = |t: T| evaluate(alpha, tau, here * t.exp(), cfg, init);
        let grid_point = at(T::zero())?;
        if lo == hi {
            return Ok((here, grid_point.error, grid_point.loss, metric(&grid_point)));
        }
        // Failed evaluations inside the bracket count as +∞.
        let x = golden_section((lo / here).ln(), (hi / here).ln(), T::c(LAMBDA_RTOL / 4.0), |t| {
            at(t).map_or(T::infinity(), |pt| metric(&pt))
        });
        let refined = at(x)?;
        // Keep the grid point if the refinement did not improve on it.
        if metric(&refined) <= metric(&grid_point) {
            Ok((here * x.exp(), refined.error, refined.loss, metric(&refined)))
        } else {
            Ok((here, grid_point.error, grid_point.loss, metric(&grid_point)))
        }
    };
    let (lambda_error, error_at_lambda_error, _, _) = refine(ie, |p| p.error)?;
    let (lambda_loss, error_at_lambda_loss, loss_at_lambda_loss, _) = refine(il, |p| p.loss)?;
    Ok(LambdaSweep {
        lambdas: lambda_grid.to_vec(),
        error_unimodal: unimodal(&errors),
        loss_unimodal: unimodal(&losses),
        errors,
        losses,
        p_levels: p_levels.to_vec(),
        calibrations,
        lambda_error,
        lambda_loss,
        error_at_lambda_error,
        error_at_lambda_loss,
        loss_at_lambda_loss,
        failed,
    })
}

/// `Δ_p` at `λ_error` and at `λ_loss` of the default sweep.
pub fn calibration_at_optimal<T: Scalar>(alpha: T, tau: T, p: T, cfg: &SEConfig) -> Result<(T, T)> {
    let s = sweep(alpha, tau, &default_grid(), &[], cfg)?;
    let delta = |lambda: T| -> Result<T> {
        let fp = solve_erm_from(alpha, tau, lambda, cfg, None)?;
        calibration_erm(p, fp.m, fp.q, tau)
    };
    Ok((delta(s.lambda_error)?, delta(s.lambda_loss)?))
}

fn subset<T: Scalar>(data: &Dataset<T>, rows: &[usize]) -> Result<Dataset<T>> {
    let d = data.d();
    let mut x = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        x.extend_from_slice(data.x.row(r));
    }
    Ok(Dataset {
        x: Matrix::from_vec(rows.len(), d, x)?,
        y: rows.iter().map(|&r| data.y[r]).collect(),
        w_star: data.w_star.clone(),
        tau: data.tau,
        seed: data.seed,
    })
}

fn both_classes<T: Scalar>(y: &[T]) -> bool {
    y.iter().any(|&v| v > T::zero()) && y.iter().any(|&v| v < T::zero())
}

/// Holdout split of `data`: a seeded shuffle, the first `holdout_fraction · n`
/// rows for validation. Splits with a single-class validation set are redrawn
/// from the next seed, at most ten times.
pub fn holdout_split<T: Scalar>(
    data: &Dataset<T>,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(Dataset<T>, Dataset<T>)> {
    if !(holdout_fraction > 0.0 && holdout_fraction <= 0.5) {
        return Err(invalid("holdout_fraction must lie in (0, 0.5]"));
    }
    data.validate()?;
    let n = data.n();
    let n_val = ((holdout_fraction * n as f64).round() as usize).max(1);
    if n_val >= n {
        return Err(invalid("dataset too small for a holdout split"));
    }
    for attempt in 0..MAX_SPLIT_ATTEMPTS {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng::aux_stream(seed.wrapping_add(attempt), HOLDOUT_STREAM));
        let (val, train) = idx.split_at(n_val);
        let val_set = subset(data, val)?;
        if both_classes(&val_set.y) {
            return Ok((subset(data, train)?, val_set));
        }
    }
    Err(invalid("every holdout split had a single-class validation set"))
}

/// Holdout validation error and loss of the ERM estimator along
/// `lambda_grid`. Minimizers are grid points (ties to the smaller index);
/// calibrations use the overlaps of each estimator with the teacher.
pub fn empirical_crossval<T: Scalar>(
    data: &Dataset<T>,
    lambda_grid: &[T],
    p_levels: &[T],
    holdout_fraction: f64,
    seed: u64,
    erm_cfg: &ErmConfig,
) -> Result<LambdaSweep<T>> {
    if lambda_grid.is_empty() || lambda_grid.iter().any(|&l| !(l > T::zero() && l.is_finite())) {
        return Err(invalid("lambda grid must be non-empty with every λ > 0"));
    }
    let (train, val) = holdout_split(data, holdout_fraction, seed)?;
    let d = T::from_usize_lossy(data.d());
    let n_val = T::from_usize_lossy(val.n());
    let mut errors = Vec::new();
    let mut losses = Vec::new();
    let mut calibrations = Vec::new();
    let mut failed = Vec::new();
    for (i, &lambda) in lambda_grid.iter().enumerate() {
        match minimize(&train, lambda, erm_cfg) {
            Ok(sol) => {
                let mut wrong = T::zero();
                let mut loss = T::zero();
                for (row, &y) in val.x.iter_rows().zip(&val.y) {
                    let a = dot(row, &sol.w_hat);
                    let yhat = if a >= T::zero() { T::one() } else { -T::one() };
                    if yhat != y {
                        wrong += T::one();
                    }
                    loss += logistic_loss(y * a);
                }
                errors.push(wrong / n_val);
                losses.push(loss / n_val);
                let m = dot(&sol.w_hat, &data.w_star) / d;
                let q = norm_sq(&sol.w_hat) / d;
                calibrations.push(
                    p_levels
                        .iter()
                        .map(|&p| calibration_erm(p, m, q, data.tau).unwrap_or(T::nan()))
                        .collect(),
                );
            }
            Err(e) => {
                failed.push((i, e.to_string()));
                errors.push(T::nan());
                losses.push(T::nan());
                calibrations.push(vec![T::nan(); p_levels.len()]);
            }
        }
    }
    let (Some(ie), Some(il)) = (argmin(&errors), argmin(&losses)) else {
        return Err(Error::NonConvergence {
            what: "empirical cross-validation (no grid point solved)",
            iterations: lambda_grid.len(),
            residual: f64::NAN,
            last: Vec::new(),
        });
    };
    Ok(LambdaSweep {
        lambdas: lambda_grid.to_vec(),
        error_unimodal: unimodal(&errors),
        loss_unimodal: unimodal(&losses),
        lambda_error: lambda_grid[ie],
        lambda_loss: lambda_grid[il],
        error_at_lambda_error: errors[ie],
        error_at_lambda_loss: errors[il],
        loss_at_lambda_loss: losses[il],
        errors,
        losses,
        p_levels: p_levels.to_vec(),
        calibrations,
        failed,
    })
}
