//! Fresh test points from the probit model and binned calibration estimates.

use crate::rng;
use crate::scalar::Scalar;

/// Streams `n_test` test points `x ~ N(0, I/d)` together with the label noise
/// `ξ ~ N(0, 1)` to `visit(x, ξ)`. Points come from auxiliary stream `k` of
/// `seed`; only one point is held in memory at a time.
pub fn for_each_test_point<T: Scalar, F: FnMut(&[T], T)>(d: usize, n_test: usize, seed: u64, k: u64, mut visit: F) {
    let mut r = rng::aux_stream(seed, k);
    let scale = 1.0 / (d as f64).sqrt();
    let mut x = vec![T::zero(); d];
    for _ in 0..n_test {
        for xi in x.iter_mut() {
            *xi = T::c(rng::normal(&mut r) * scale);
        }
        let noise = T::c(rng::normal(&mut r));
        visit(&x, noise);
    }
}

/// Running mean and standard error.
#[derive(Clone, Copy, Debug, Default)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let delta = v - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (v - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            f64::INFINITY
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Binned conditional statistics of a target confidence given that a
/// classifier's confidence falls in `[lo, hi]`.
#[derive(Clone, Copy, Debug)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    acc: Accumulator,
}

impl CalibrationBin {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            acc: Accumulator::default(),
        }
    }

    /// Records one test point if its confidence lies in the bin.
    #[inline]
    pub fn observe(&mut self, confidence: f64, target: f64) {
        if confidence >= self.lo && confidence <= self.hi {
            self.acc.push(target);
        }
    }

    pub fn count(&self) -> u64 {
        self.acc.count()
    }

    /// `p − mean(target | confidence ∈ bin)`, or `None` for an empty bin.
    pub fn delta(&self, p: f64) -> Option<f64> {
        (self.acc.count() > 0).then(|| p - self.acc.mean())
    }

    pub fn conditional_mean(&self) -> Option<f64> {
        (self.acc.count() > 0).then(|| self.acc.mean())
    }

    pub fn conditional_variance(&self) -> Option<f64> {
        (self.acc.count() > 1).then(|| self.acc.variance())
    }
}

/// Agreement of a histogram of `n_samples` draws with predicted cell
/// probabilities, cell by cell, at a `sigmas`-standard-error level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistogramCheck {
    pub cells: usize,
    /// Cells whose count falls outside the acceptance interval.
    pub exceedances: usize,
    /// Number of exceedances expected if the predicted probabilities are exact.
    pub expected_exceedances: f64,
    /// Largest |count − Np| / √(Np(1−p)) over all cells.
    pub worst_z: f64,
}

/// Cells with an expected count above this use the normal approximation.
const NORMAL_REGIME: f64 = 1000.0;

/// Compares counts with `Binomial(n_samples, p)` cell by cell. A count is
/// accepted when it lies within `sigmas` standard errors; for cells with a
/// small expected count the normal approximation is replaced by the exact
/// (Poisson) interval of the same two-sided level `2Φ(−sigmas)`.
pub fn compare_histogram(counts: &[u64], probs: &[f64], n_samples: u64, sigmas: f64) -> HistogramCheck {
    assert_eq!(counts.len(), probs.len());
    let level = crate::special::norm_cdf(-sigmas);
    let n = n_samples as f64;
    let mut out = HistogramCheck {
        cells: counts.len(),
        exceedances: 0,
        expected_exceedances: 0.0,
        worst_z: 0.0,
    };
    for (&c, &p) in counts.iter().zip(probs) {
        let mu = n * p;
        let sd = (mu * (1.0 - p)).max(0.0).sqrt();
        let z = if sd > 0.0 {
            (c as f64 - mu).abs() / sd
        } else if c > 0 {
            f64::INFINITY
        } else {
            0.0
        };
        out.worst_z = out.worst_z.max(z);
        if mu >= NORMAL_REGIME {
            out.expected_exceedances += 2.0 * level;
            if z > sigmas {
                out.exceedances += 1;
            }
        } else {
            let (lo, hi, reject) = poisson_acceptance(mu, level);
            out.expected_exceedances += reject;
            if c < lo || c > hi {
                out.exceedances += 1;
            }
        }
    }
    out
}

/// Acceptance interval `[lo, hi]` for a Poisson(`mu`) count such that each
/// tail outside it has probability below `level`, and the total rejection
/// probability.
fn poisson_acceptance(mu: f64, level: f64) -> (u64, u64, f64) {
    if mu <= 0.0 {
        return (0, 0, 0.0);
    }
    let top = (mu + 12.0 * mu.sqrt() + 40.0).ceil() as usize;
    let mut pmf = Vec::with_capacity(top + 1);
    let mut log_p = -mu;
    for k in 0..=top {
        if k > 0 {
            log_p += mu.ln() - (k as f64).ln();
        }
        pmf.push(log_p.exp());
    }
    let mut lo = 0u64;
    let mut lower = 0.0;
    for (k, &f) in pmf.iter().enumerate() {
        if lower + f >= level {
            lo = k as u64;
            break;
        }
        lower += f;
    }
    let mut hi = top as u64;
    let mut upper = 0.0;
    for (k, &f) in pmf.iter().enumerate().rev() {
        if upper + f >= level {
            hi = k as u64;
            break;
        }
        upper += f;
    }
    (lo, hi, lower + upper)
}
