//! The probit teacher-student model: `y = sign(w_star·x + τ ξ)` with
//! `x ~ N(0, I/d)`, `w_star ~ N(0, I)` and `ξ ~ N(0, 1)`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::rng;
use crate::scalar::{dot, Scalar};
use crate::special::{norm_cdf, norm_quantile};

/// Problem definition shared by every module.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ModelParams<T: Scalar> {
    pub d: usize,
    pub alpha: T,
    pub tau: T,
    pub lambda: T,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(d: usize, alpha: T, tau: T, lambda: T) -> Result<Self> {
        let p = Self { d, alpha, tau, lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(invalid("d must be at least 1"));
        }
        if !(self.alpha > T::zero()) || !self.alpha.is_finite() {
            return Err(invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.tau >= T::zero()) || !self.tau.is_finite() {
            return Err(invalid(format!("tau must be non-negative, got {}", self.tau)));
        }
        if !(self.lambda >= T::zero()) {
            return Err(invalid(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.n() == 0 {
            return Err(invalid("round(alpha * d) must be at least 1"));
        }
        Ok(())
    }

    /// Number of samples `n = round(α d)`.
    pub fn n(&self) -> usize {
        (self.alpha.f64() * self.d as f64).round() as usize
    }
}

/// One instance of the model. Labels are stored as `±1` in the scalar type.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T: Scalar> {
    pub x: Matrix<T>,
    pub y: Vec<T>,
    pub w_star: Vec<T>,
    pub tau: T,
    pub seed: u64,
}

impl<T: Scalar> Dataset<T> {
    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.y.len() != self.n() || self.w_star.len() != self.d() {
            return Err(invalid("dataset dimensions are inconsistent"));
        }
        if self.y.iter().any(|&v| v != T::one() && v != -T::one()) {
            return Err(invalid("labels must be exactly -1 or +1"));
        }
        Ok(())
    }

    /// Writes the CSV layout
    ///
    /// ```text
    /// d,n,tau,seed
    /// <d>,<n>,<tau>,<seed>
    /// <w_star_1>,...,<w_star_d>
    /// <x_1>,...,<x_d>,<y>        (n rows)
    /// ```
    ///
    /// Numbers use the shortest representation that round-trips exactly.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "d,n,tau,seed")?;
        writeln!(w, "{},{},{},{}", self.d(), self.n(), self.tau, self.seed)?;
        write_row(&mut w, &self.w_star, None)?;
        for (row, &y) in self.x.iter_rows().zip(&self.y) {
            write_row(&mut w, row, Some(y))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing {what}")))?
                .map_err(Error::from)
        };
        let header = next("header")?;
        if header.trim() != "d,n,tau,seed" {
            return Err(Error::Parse(format!("unexpected header {header:?}")));
        }
        let meta = next("metadata row")?;
        let fields: Vec<&str> = meta.trim().split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse("metadata row needs 4 fields".into()));
        }
        let d: usize = parse_field(fields[0])?;
        let n: usize = parse_field(fields[1])?;
        let tau: T = parse_scalar(fields[2])?;
        let seed: u64 = parse_field(fields[3])?;
        let w_star = parse_row::<T>(&next("w_star row")?, d)?;
        let mut data = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = parse_row::<T>(&next(&format!("sample row {i}"))?, d + 1)?;
            y.push(row.pop().unwrap());
            data.extend(row);
        }
        let ds = Self {
            x: Matrix::from_vec(n, d, data)?,
            y,
            w_star,
            tau,
            seed,
        };
        ds.validate()?;
        Ok(ds)
    }
}

fn write_row<T: Scalar, W: Write>(w: &mut W, row: &[T], last: Option<T>) -> Result<()> {
    let mut first = true;
    for v in row.iter().chain(last.as_ref()) {
        if !first {
            w.write_all(b",")?;
        }
        write!(w, "{v}")?;
        first = false;
    }
    w.write_all(b"\n")?;
    Ok(())
}

fn parse_field<F: std::str::FromStr>(s: &str) -> Result<F> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("cannot parse {s:?}")))
}

fn parse_scalar<T: Scalar>(s: &str) -> Result<T> {
    let v: f64 = parse_field(s)?;
    Ok(T::c(v))
}

fn parse_row<T: Scalar>(line: &str, expect: usize) -> Result<Vec<T>> {
    let row: Vec<T> = line.trim().split(',').map(parse_scalar::<T>).collect::<Result<_>>()?;
    if row.len() != expect {
        return Err(Error::Parse(format!("row has {} fields, expected {expect}", row.len())));
    }
    Ok(row)
}

/// Probit label for pre-activation `h = w_star·x` and noise `ξ`.
#[inline]
pub fn probit_label<T: Scalar>(h: T, tau: T, xi: T) -> T {
    if h + tau * xi >= T::zero() {
        T::one()
    } else {
        -T::one()
    }
}

/// Draws the teacher `w_star ~ N(0, I_d)` for `seed`.
pub fn draw_teacher<T: Scalar>(d: usize, seed: u64) -> Vec<T> {
    let mut r = rng::stream(seed, rng::STREAM_TEACHER);
    (0..d).map(|_| T::c(rng::normal(&mut r))).collect()
}

/// Samples an instance. Streams: covariates, teacher and label noise are
/// drawn from separate ChaCha streams of `seed` (see [`crate::rng`]).
pub fn generate<T: Scalar>(params: &ModelParams<T>, seed: u64) -> Result<Dataset<T>> {
    params.validate()?;
    let w_star = draw_teacher(params.d, seed);
    generate_with_teacher(params, w_star, seed)
}

/// Same as [`generate`] but with a caller-supplied teacher.
pub fn generate_with_teacher<T: Scalar>(params: &ModelParams<T>, w_star: Vec<T>, seed: u64) -> Result<Dataset<T>> {
    params.validate()?;
    if w_star.len() != params.d {
        return Err(invalid("teacher length differs from d"));
    }
    let (n, d) = (params.n(), params.d);
    let scale = 1.0 / (d as f64).sqrt();
    let mut rx = rng::stream(seed, rng::STREAM_COVARIATES);
    let data: Vec<T> = (0..n * d).map(|_| T::c(rng::normal(&mut rx) * scale)).collect();
    let x = Matrix::from_vec(n, d, data)?;
    let mut rxi = rng::stream(seed, rng::STREAM_NOISE);
    let y = x
        .iter_rows()
        .map(|row| {
            let xi = T::c(rng::normal(&mut rxi));
            probit_label(dot(row, &w_star), params.tau, xi)
        })
        .collect();
    Ok(Dataset {
        x,
        y,
        w_star,
        tau: params.tau,
        seed,
    })
}

/// `σ⋆(x/τ) = ½ erfc(−x/(τ√2))`; a hard step when `tau_eff = 0`.
pub fn sigma_star<T: Scalar>(x: T, tau_eff: T) -> T {
    if tau_eff > T::zero() {
        norm_cdf(x / tau_eff)
    } else if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        T::zero()
    } else {
        T::c(0.5)
    }
}

/// Inverse of [`sigma_star`] in its first argument, for `tau_eff > 0`.
pub fn sigma_star_inverse<T: Scalar>(p: T, tau_eff: T) -> Result<T> {
    if !(tau_eff > T::zero()) {
        return Err(invalid("sigma_star is not invertible at tau = 0"));
    }
    if !(p > T::zero() && p < T::one()) {
        return Err(invalid(format!("probability {p} outside (0, 1)")));
    }
    Ok(tau_eff * norm_quantile(p))
}

/// Teacher confidence `f⋆(x) = P(y = 1 | x)`.
pub fn oracle_confidence<T: Scalar>(x: &[T], w_star: &[T], tau: T) -> T {
    sigma_star(dot(x, w_star), tau)
}

/// Test error of `sign(w_star·x)` against noisy labels: `arctan(τ)/π`.
pub fn oracle_test_error<T: Scalar>(tau: T) -> T {
    tau.atan() / T::PI()
}
