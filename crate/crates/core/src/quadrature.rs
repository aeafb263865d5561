//! Gauss-Hermite and Gauss-Legendre rules.
//!
//! Nodes are computed once in `f64` by Newton iteration on the three-term
//! recurrences and then converted to the working precision.

use crate::scalar::Scalar;

/// Gauss-Hermite rule for expectations under the standard normal:
/// `E[f(Z)] ≈ Σ wᵢ f(zᵢ)`, exact for polynomials of degree `2n − 1`.
#[derive(Clone, Debug)]
pub struct GaussHermite<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> GaussHermite<T> {
    /// `n` must be in `1..=500` (the recurrence overflows beyond that).
    pub fn new(n: usize) -> Self {
        assert!((1..=500).contains(&n), "Gauss-Hermite order {n} out of range");
        let (x, w) = hermite_physicists(n);
        let s2 = std::f64::consts::SQRT_2;
        let sqrt_pi = std::f64::consts::PI.sqrt();
        Self {
            nodes: x.iter().map(|&v| T::c(v * s2)).collect(),
            weights: w.iter().map(|&v| T::c(v / sqrt_pi)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E[f(Z)]`, `Z ~ N(0, 1)`.
    #[inline]
    pub fn expect<F: FnMut(T) -> T>(&self, mut f: F) -> T {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }

    /// `E[f(X)]`, `X ~ N(mean, sd²)`.
    #[inline]
    pub fn expect_normal<F: FnMut(T) -> T>(&self, mean: T, sd: T, mut f: F) -> T {
        self.expect(|z| f(mean + sd * z))
    }
}

/// Nodes and weights for `∫ e^{−x²} f(x) dx`.
///
/// Starting values are the eigenvalues of the Jacobi matrix (Golub-Welsch);
/// each root is then polished by Newton steps on the orthonormal recurrence,
/// which also yields its weight.
fn hermite_physicists(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x: Vec<f64> = vec![0.0; n];
    let mut off: Vec<f64> = (0..n)
        .map(|i| if i + 1 < n { ((i + 1) as f64 / 2.0).sqrt() } else { 0.0 })
        .collect();
    tridiagonal_eigenvalues(&mut x, &mut off);
    x.sort_by(|a, b| a.total_cmp(b));

    let pim4 = std::f64::consts::PI.powf(-0.25);
    let nf = n as f64;
    let mut w = vec![0.0; n];
    for (xi, wi) in x.iter_mut().zip(w.iter_mut()) {
        let mut z = *xi;
        let mut pp = 1.0;
        for _ in 0..10 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        *xi = z;
        *wi = 2.0 / (pp * pp);
    }
    // Enforce exact symmetry.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let xs = 0.5 * (x[j] - x[i]);
        let ws = 0.5 * (w[i] + w[j]);
        x[i] = -xs;
        x[j] = xs;
        w[i] = ws;
        w[j] = ws;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// sub-diagonal `e` (`e[i]` couples `i` and `i + 1`), by implicit QL.
/// The eigenvalues overwrite `d`; `e` is destroyed.
fn tridiagonal_eigenvalues(d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 100, "tridiagonal QL failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}

/// Gauss-Legendre rule on `[−1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> GaussLegendre<T> {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut pp = 1.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
                }
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 {
                    break;
                }
            }
            x[i] = -z;
            x[n - 1 - i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
            w[n - 1 - i] = w[i];
        }
        Self {
            nodes: x.into_iter().map(T::c).collect(),
            weights: w.into_iter().map(T::c).collect(),
        }
    }

    /// `∫_a^b f(x) dx`
    pub fn integrate<F: FnMut(T) -> T>(&self, a: T, b: T, mut f: F) -> T {
        let half = (b - a) / T::c(2.0);
        let mid = (a + b) / T::c(2.0);
        half * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<T>()
    }

    /// Composite rule with `panels` equal sub-intervals.
    pub fn integrate_composite<F: FnMut(T) -> T>(&self, a: T, b: T, panels: usize, mut f: F) -> T {
        let panels = panels.max(1);
        let h = (b - a) / T::from_usize_lossy(panels);
        (0..panels)
            .map(|k| {
                let lo = a + h * T::from_usize_lossy(k);
                self.integrate(lo, lo + h, &mut f)
            })
            .sum()
    }
}

/// `E[f(z, ω, ξ)]` for `(z, ω) ~ N(0, [[1, m], [m, q]])` and an independent
/// `ξ ~ N(0, 1)`, by tensor-product Gauss-Hermite after Cholesky whitening.
///
/// If the covariance is singular (`q ≤ m²`) the rule collapses onto the line
/// `z = (m/q) ω`.
pub fn gaussian_expectation_2d<T: Scalar, F: FnMut(T, T, T) -> T>(rule: &GaussHermite<T>, m: T, q: T, mut f: F) -> T {
    assert!(q > T::zero(), "gaussian_expectation_2d needs q > 0");
    let sq = q.sqrt();
    let slope = m / sq;
    let cond_var = T::one() - m * m / q;
    let degenerate = !(cond_var > T::c(1e-14));
    let cond_sd = if degenerate { T::zero() } else { cond_var.sqrt() };
    let mut total = T::zero();
    for (&u1, &w1) in rule.nodes.iter().zip(&rule.weights) {
        let omega = sq * u1;
        let mut inner = T::zero();
        if degenerate {
            let z = slope * u1;
            for (&x, &wx) in rule.nodes.iter().zip(&rule.weights) {
                inner += wx * f(z, omega, x);
            }
        } else {
            for (&u2, &w2) in rule.nodes.iter().zip(&rule.weights) {
                let z = slope * u1 + cond_sd * u2;
                let mut acc = T::zero();
                for (&x, &wx) in rule.nodes.iter().zip(&rule.weights) {
                    acc += wx * f(z, omega, x);
                }
                inner += w2 * acc;
            }
        }
        total += w1 * inner;
    }
    total
}
