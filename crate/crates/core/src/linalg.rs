//! Dense row-major matrices and the handful of kernels the solvers need.

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidParameter(format!(
                "matrix data has length {}, expected {rows}×{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::InvalidParameter("ragged rows".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// `A v`
    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        self.iter_rows().map(|r| dot(r, v)).collect()
    }

    /// `Aᵀ v`
    pub fn matvec_t(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (r, &vi) in self.iter_rows().zip(v) {
            if vi != T::zero() {
                for (o, &x) in out.iter_mut().zip(r) {
                    *o += vi * x;
                }
            }
        }
        out
    }

    /// Entry-wise square `A ⊙ A`.
    pub fn squared(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * x).collect(),
        }
    }

    /// Weighted Gram matrix `Aᵀ diag(w) A` (symmetric, both triangles filled).
    ///
    /// Rows are processed in blocks that are transposed into scratch buffers,
    /// so the inner products run over contiguous memory.
    pub fn weighted_gram(&self, w: &[T]) -> Self {
        assert_eq!(w.len(), self.rows);
        const BLOCK: usize = 64;
        let d = self.cols;
        let mut g = Self::zeros(d, d);
        let mut plain = vec![T::zero(); d * BLOCK];
        let mut scaled = vec![T::zero(); d * BLOCK];
        let mut start = 0;
        while start < self.rows {
            let len = BLOCK.min(self.rows - start);
            for k in 0..len {
                let r = self.row(start + k);
                let wk = w[start + k];
                for j in 0..d {
                    plain[j * len + k] = r[j];
                    scaled[j * len + k] = wk * r[j];
                }
            }
            for j in 0..d {
                let sj = &scaled[j * len..(j + 1) * len];
                let row = g.row_mut(j);
                for (k, gk) in row.iter_mut().enumerate().take(j + 1) {
                    *gk += dot(sj, &plain[k * len..(k + 1) * len]);
                }
            }
            start += len;
        }
        for j in 0..d {
            for k in 0..j {
                let v = g[(j, k)];
                g[(k, j)] = v;
            }
        }
        g
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower Cholesky factor `L` with `A = L Lᵀ`, stored in a square matrix.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        let n = a.rows();
        assert_eq!(n, a.cols());
        let mut l = Matrix::zeros(n, n);
        let mut lj = vec![T::zero(); n];
        for j in 0..n {
            lj[..j].copy_from_slice(&l.row(j)[..j]);
            let diag = a[(j, j)] - dot(&lj[..j], &lj[..j]);
            if !(diag > T::zero()) {
                return Err(Error::NotPositiveDefinite {
                    pivot: j,
                    value: diag.f64(),
                });
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let li = l.row(i);
                let v = (a[(i, j)] - dot(&li[..j], &lj[..j])) / ljj;
                l[(i, j)] = v;
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &Matrix<T> {
        &self.l
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.rows();
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let r = self.l.row(i);
            y[i] = (y[i] - dot(&r[..i], &y[..i])) / r[i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    pub fn log_det(&self) -> T {
        (0..self.l.rows()).map(|i| self.l[(i, i)].ln()).sum::<T>() * T::c(2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spd(n: usize) -> Matrix<f64> {
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = 1.0 / (1.0 + (i as f64 - j as f64).abs());
            }
            a[(i, i)] += n as f64;
        }
        a
    }

    #[test]
    fn cholesky_solves() {
        let a = spd(7);
        let b: Vec<f64> = (0..7).map(|i| i as f64 - 2.5).collect();
        let ch = Cholesky::new(&a).unwrap();
        let x = ch.solve(&b);
        let back = a.matvec(&x);
        for (u, v) in back.iter().zip(&b) {
            assert_relative_eq!(u, v, epsilon = 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            Cholesky::new(&a),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn weighted_gram_matches_naive() {
        let rows = 150;
        let cols = 9;
        let data: Vec<f64> = (0..rows * cols)
            .map(|k| ((k * 37 % 101) as f64 - 50.0) / 30.0)
            .collect();
        let x = Matrix::from_vec(rows, cols, data).unwrap();
        let w: Vec<f64> = (0..rows).map(|i| 0.1 + (i % 7) as f64).collect();
        let g = x.weighted_gram(&w);
        for j in 0..cols {
            for k in 0..cols {
                let naive: f64 = (0..rows).map(|i| w[i] * x[(i, j)] * x[(i, k)]).sum();
                assert_relative_eq!(g[(j, k)], naive, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn transpose_product() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(x.matvec_t(&[1.0, 0.0, -1.0]), vec![-4.0, -4.0]);
        assert_eq!(x.matvec(&[1.0, 1.0]), vec![3.0, 7.0, 11.0]);
    }
}
