//! Error function family, Gaussian CDF/quantile and logistic link helpers.
//!
//! `erfc` uses the FreeBSD msun (fdlibm) rational approximations, evaluated
//! in the generic scalar type. The same decomposition
//! `erfc(x) = exp(-x² - 0.5625 + R(1/x²)/S(1/x²)) / x` is kept in log form
//! for [`log_erfc`], so upper tails are available far past the point where
//! `erfc` itself underflows.

use crate::scalar::Scalar;

// Coefficients from FreeBSD /usr/src/lib/msun/src/s_erf.c
// Copyright (C) 1993 by Sun Microsystems, Inc. All rights reserved.
// Permission to use, copy, modify, and distribute this software is freely
// granted, provided that this notice is preserved.
const ERX: f64 = 8.45062911510467529297e-01;
const PP: [f64; 5] = [
    1.28379167095512558561e-01,
    -3.25042107247001499370e-01,
    -2.84817495755985104766e-02,
    -5.77027029648944159157e-03,
    -2.37630166566501626084e-05,
];
const QQ: [f64; 6] = [
    1.0,
    3.97917223959155352819e-01,
    6.50222499887672944485e-02,
    5.08130628187576562776e-03,
    1.32494738004321644526e-04,
    -3.96022827877536812320e-06,
];
const PA: [f64; 7] = [
    -2.36211856075265944077e-03,
    4.14856118683748331666e-01,
    -3.72207876035701323847e-01,
    3.18346619901161753674e-01,
    -1.10894694282396677476e-01,
    3.54783043256182359371e-02,
    -2.16637559486879084300e-03,
];
const QA: [f64; 7] = [
    1.0,
    1.06420880400844228286e-01,
    5.40397917702171048937e-01,
    7.18286544141962662868e-02,
    1.26171219808761642112e-01,
    1.36370839120290507362e-02,
    1.19844998467991074170e-02,
];
const RA: [f64; 8] = [
    -9.86494403484714822705e-03,
    -6.93858572707181764372e-01,
    -1.05586262253232909814e+01,
    -6.23753324503260060396e+01,
    -1.62396669462573470355e+02,
    -1.84605092906711035994e+02,
    -8.12874355063065934246e+01,
    -9.81432934416914548592e+00,
];
const SA: [f64; 9] = [
    1.0,
    1.96512716674392571292e+01,
    1.37657754143519042600e+02,
    4.34565877475229228821e+02,
    6.45387271733267880336e+02,
    4.29008140027567833386e+02,
    1.08635005541779435134e+02,
    6.57024977031928170135e+00,
    -6.04244152148580987438e-02,
];
const RB: [f64; 7] = [
    -9.86494292470009928597e-03,
    -7.99283237680523006574e-01,
    -1.77579549177547519889e+01,
    -1.60636384855821916062e+02,
    -6.37566443368389627722e+02,
    -1.02509513161107724954e+03,
    -4.83519191608651397019e+02,
];
const SB: [f64; 8] = [
    1.0,
    3.03380607434824582924e+01,
    3.25792512996573918826e+02,
    1.53672958608443695994e+03,
    3.19985821950859553908e+03,
    2.55305040643316442583e+03,
    4.74528541206955367215e+02,
    -2.24409524465858183362e+01,
];

#[inline]
fn poly<T: Scalar>(coef: &[f64], x: T) -> T {
    coef.iter().rev().fold(T::zero(), |acc, &c| acc * x + T::c(c))
}

/// Upper-tail decomposition for `x ≥ 1.25`: returns `(z, rest)` with
/// `erfc(x) = exp(−z²) · exp(rest) / x`, where `z` keeps the leading bits of
/// `x` so that `z²` is exact in double precision.
fn erfc_tail_parts<T: Scalar>(x: T) -> (T, T) {
    if x > T::c(26.0) {
        // Asymptotic series; the rational fits below are only certified to 28.
        let s = (x * x).recip();
        let series = T::one() + s * (T::c(-0.5) + s * (T::c(0.75) + s * (T::c(-1.875) + s * T::c(6.5625))));
        return (x, series.ln() - T::PI().sqrt().ln());
    }
    let s = (x * x).recip();
    let (r, q) = if x < T::c(1.0 / 0.35) {
        (poly(&RA, s), poly(&SA, s))
    } else {
        (poly(&RB, s), poly(&SB, s))
    };
    let z = (x * T::c(4096.0)).trunc() / T::c(4096.0);
    (z, -T::c(0.5625) + (z - x) * (z + x) + r / q)
}

/// Complementary error function.
pub fn erfc<T: Scalar>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    let ax = x.abs();
    if ax < T::c(0.84375) {
        if ax < T::c(1.0e-17) {
            return T::one() - x;
        }
        let z = x * x;
        let y = poly(&PP, z) / poly(&QQ, z);
        return if x < T::c(0.25) {
            T::one() - (x + x * y)
        } else {
            T::c(0.5) - (x - T::c(0.5) + x * y)
        };
    }
    let upper = if ax < T::c(1.25) {
        let s = ax - T::one();
        T::one() - T::c(ERX) - poly(&PA, s) / poly(&QA, s)
    } else if ax < T::c(28.0) {
        let (z, rest) = erfc_tail_parts(ax);
        (-z * z).exp() * rest.exp() / ax
    } else {
        T::zero()
    };
    if x.is_sign_negative() {
        T::c(2.0) - upper
    } else {
        upper
    }
}

/// Error function.
pub fn erf<T: Scalar>(x: T) -> T {
    if x.abs() < T::c(0.84375) {
        let z = x * x;
        return x + x * (poly(&PP, z) / poly(&QQ, z));
    }
    T::one() - erfc(x)
}

/// `ln erfc(x)`, finite for every finite `x`.
pub fn log_erfc<T: Scalar>(x: T) -> T {
    if x < T::c(1.25) {
        erfc(x).ln()
    } else {
        let (z, rest) = erfc_tail_parts(x);
        -z * z + rest - x.ln()
    }
}

/// Standard normal density.
#[inline]
pub fn norm_pdf<T: Scalar>(x: T) -> T {
    (-(x * x) / T::c(2.0)).exp() / (T::c(2.0) * T::PI()).sqrt()
}

#[inline]
pub fn log_norm_pdf<T: Scalar>(x: T) -> T {
    -(x * x) / T::c(2.0) - T::c(0.5) * (T::c(2.0) * T::PI()).ln()
}

/// Standard normal CDF `Φ(x) = ½ erfc(−x/√2)`.
#[inline]
pub fn norm_cdf<T: Scalar>(x: T) -> T {
    T::c(0.5) * erfc(-x / T::SQRT_2())
}

/// `ln Φ(x)`, accurate deep in the lower tail.
#[inline]
pub fn log_norm_cdf<T: Scalar>(x: T) -> T {
    T::c(0.5).ln() + log_erfc(-x / T::SQRT_2())
}

/// Inverse Mills ratio `φ(t)/Φ(t)`, stable for large negative `t`.
pub fn mills_ratio<T: Scalar>(t: T) -> T {
    if t > T::c(-5.0) {
        norm_pdf(t) / norm_cdf(t)
    } else {
        T::one() / upper_mills_cf(-t)
    }
}

/// `(1 − Φ(x))/φ(x)` for `x ≥ 5` via the continued fraction
/// `1/(x + 1/(x + 2/(x + 3/(x + ...))))`, evaluated with Lentz's method.
fn upper_mills_cf<T: Scalar>(x: T) -> T {
    let tiny = T::c(1e-300).max(T::min_positive_value());
    let mut f = x;
    let mut c = x;
    let mut d = T::zero();
    for k in 1..500 {
        let a = T::from_usize_lossy(k);
        d = x + a * d;
        if d == T::zero() {
            d = tiny;
        }
        d = d.recip();
        c = x + a / c;
        if c == T::zero() {
            c = tiny;
        }
        let delta = c * d;
        f *= delta;
        if (delta - T::one()).abs() <= T::epsilon() {
            break;
        }
    }
    f.recip()
}

/// Standard normal quantile `Φ⁻¹(p)`.
///
/// Bracketed Newton iteration on `ln Φ(x) − ln p` (lower half; the upper half
/// uses the reflection `Φ⁻¹(p) = −Φ⁻¹(1 − p)`). Returns ±∞ at p ∈ {0, 1}.
pub fn norm_quantile<T: Scalar>(p: T) -> T {
    if p.is_nan() || p < T::zero() || p > T::one() {
        return T::nan();
    }
    if p == T::zero() {
        return T::neg_infinity();
    }
    if p == T::one() {
        return T::infinity();
    }
    if p == T::c(0.5) {
        return T::zero();
    }
    if p > T::c(0.5) {
        return -lower_quantile(T::one() - p);
    }
    lower_quantile(p)
}

fn lower_quantile<T: Scalar>(p: T) -> T {
    let target = p.ln();
    // Abramowitz & Stegun 26.2.23 as a starting point (|error| < 4.5e-4).
    let t = (T::c(-2.0) * target).sqrt();
    let num = T::c(2.515517) + t * (T::c(0.802853) + t * T::c(0.010328));
    let den = T::one() + t * (T::c(1.432788) + t * (T::c(0.189269) + t * T::c(0.001308)));
    let mut x = -(t - num / den);

    let mut lo = T::c(-40.0);
    let mut hi = T::zero();
    let tol = T::c(1e-12).max(T::c(8.0) * T::epsilon());
    for _ in 0..100 {
        let g = log_norm_cdf(x) - target;
        if g > T::zero() {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let step = g / mills_ratio(x);
        let mut next = x - step;
        if !(next > lo && next < hi) {
            next = T::c(0.5) * (lo + hi);
        }
        let delta = (next - x).abs();
        x = next;
        if delta <= tol * T::one().max(x.abs()) {
            break;
        }
    }
    x
}

/// Logistic sigmoid `1/(1 + e^{−x})`.
#[inline]
pub fn logistic<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        (T::one() + (-x).exp()).recip()
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Inverse of [`logistic`].
#[inline]
pub fn logit<T: Scalar>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic loss `ln(1 + e^{−margin})`.
#[inline]
pub fn logistic_loss<T: Scalar>(margin: T) -> T {
    softplus(-margin)
}

/// `ln σ'(x)` where `σ' = σ(1 − σ)`.
#[inline]
pub fn log_logistic_derivative<T: Scalar>(x: T) -> T {
    let a = x.abs();
    -a - T::c(2.0) * (-a).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Independent erfc: continued fraction for x ≥ 2, Taylor series of erf below.
    fn erfc_oracle(x: f64) -> f64 {
        if x >= 2.0 {
            return log_erfc_oracle(x).exp();
        }
        if x < 0.0 {
            return 2.0 - erfc_oracle(-x);
        }
        if x < 2.0 {
            let mut term = x;
            let mut sum = x;
            let mut n = 0.0;
            loop {
                n += 1.0;
                term *= -x * x / n;
                let add = term / (2.0 * n + 1.0);
                sum += add;
                if add.abs() < 1e-18 {
                    break;
                }
            }
            1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum
        } else {
            unreachable!()
        }
    }

    fn log_erfc_oracle(x: f64) -> f64 {
        assert!(x >= 2.0);
        {
            // Lentz evaluation of erfc(x) = e^{-x²}/√π · 1/(x + 1/2/(x + 1/(x + 3/2/(x + ...))))
            let mut f = x;
            let mut c = x;
            let mut d = 0.0;
            for k in 1..200 {
                let a = k as f64 / 2.0;
                d = x + a * d;
                d = 1.0 / d;
                c = x + a / c;
                let delta = c * d;
                f *= delta;
                if (delta - 1.0).abs() < 1e-16 {
                    break;
                }
            }
            -x * x - std::f64::consts::PI.sqrt().ln() - f.ln()
        }
    }

    #[test]
    fn erfc_matches_series_oracle() {
        let mut x = -5.0;
        while x <= 12.0 {
            let got = erfc(x);
            let want = erfc_oracle(x);
            assert_relative_eq!(got, want, max_relative = 1e-13);
            x += 0.0371;
        }
    }

    #[test]
    fn erfc_special_values() {
        assert_eq!(erfc(0.0_f64), 1.0);
        assert_eq!(erfc(f64::INFINITY), 0.0);
        assert_eq!(erfc(f64::NEG_INFINITY), 2.0);
        assert!(erfc(f64::NAN).is_nan());
        assert_relative_eq!(erf(0.5_f64), 0.5204998778130465, max_relative = 1e-15);
    }

    #[test]
    fn log_erfc_continues_past_underflow() {
        for &x in &[1.3, 2.0, 5.0, 10.0, 20.0, 27.9, 26.5, 35.0, 80.0] {
            let want = if x < 2.0 {
                erfc_oracle(x).ln()
            } else {
                log_erfc_oracle(x)
            };
            assert_relative_eq!(log_erfc(x), want, max_relative = 1e-12);
        }
        // erfc(40) underflows; compare with the asymptotic expansion.
        let x: f64 = 40.0;
        let lead = -x * x - (x * std::f64::consts::PI.sqrt()).ln() + (1.0 - 0.5 / (x * x) + 0.75 / x.powi(4)).ln();
        assert_relative_eq!(log_erfc(x), lead, max_relative = 1e-10);
        assert!(log_erfc(1e4_f64).is_finite());
        // Continuity across the series switch.
        let jump = log_erfc(26.0_f64 + 1e-9) - log_erfc(26.0_f64 - 1e-9);
        assert!((jump + 2.0 * 26.0 * 2e-9).abs() < 1e-9, "jump {jump}");
        assert_relative_eq!(log_erfc(-3.0_f64), erfc_oracle(-3.0).ln(), max_relative = 1e-14);
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert_relative_eq!(norm_cdf(1.0_f64), 0.8413447460685429, max_relative = 1e-14);
        assert_relative_eq!(norm_cdf(-1.0_f64), 0.15865525393145707, max_relative = 1e-14);
        assert_relative_eq!(log_norm_cdf(-40.0_f64), -804.6084420137538, max_relative = 1e-10);
    }

    #[test]
    fn mills_ratio_tail() {
        // φ(t)/Φ(t) ~ −t − 1/t + 2/t³ as t → −∞
        let t: f64 = -50.0;
        assert_relative_eq!(mills_ratio(t), -t - 1.0 / t + 2.0 / t.powi(3), max_relative = 1e-8);
        assert_relative_eq!(mills_ratio(0.0_f64), 2.0 * norm_pdf(0.0_f64), max_relative = 1e-15);
        // Continuity across the branch switch, and agreement with the log form.
        for &t in &[-5.0_f64, -7.3, -20.0] {
            let via_logs = (log_norm_pdf(t) - log_norm_cdf(t)).exp();
            assert_relative_eq!(mills_ratio(t), via_logs, max_relative = 1e-12);
        }
        assert_relative_eq!(
            mills_ratio(-5.0 + 1e-12_f64),
            mills_ratio(-5.0_f64),
            max_relative = 1e-12
        );
        assert!(mills_ratio(-1e8_f64).is_finite());
    }

    #[test]
    fn quantile_roundtrip() {
        for &p in &[1e-12_f64, 1e-6, 0.01, 0.2, 0.5, 0.7, 0.99, 1.0 - 1e-6] {
            let x = norm_quantile(p);
            assert!((norm_cdf(x) - p).abs() <= 1e-10 * p.max(1e-6), "p={p}");
        }
        assert_relative_eq!(norm_quantile(0.975_f64), 1.959963984540054, max_relative = 1e-12);
        assert_eq!(norm_quantile(0.0_f64), f64::NEG_INFINITY);
    }

    #[test]
    fn logistic_helpers() {
        assert_relative_eq!(logistic(3.0_f64.ln()), 0.75, max_relative = 1e-15);
        assert_relative_eq!(logit(0.1_f64), -(9.0_f64).ln(), max_relative = 1e-14);
        assert_relative_eq!(softplus(1000.0_f64), 1000.0);
        assert_relative_eq!(softplus(-1000.0_f64), 0.0);
        let x = 0.3_f64;
        let s = logistic(x);
        assert_relative_eq!(log_logistic_derivative(x), (s * (1.0 - s)).ln(), max_relative = 1e-14);
    }

    #[test]
    fn single_precision_erfc() {
        for &x in &[-2.0_f32, -0.3, 0.1, 0.5, 1.0, 2.0, 4.0] {
            let want = erfc_oracle(x as f64) as f32;
            assert_relative_eq!(erfc(x), want, max_relative = 2e-6);
        }
    }
}
