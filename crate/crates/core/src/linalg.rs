//! Minimal dense row-major matrix used by the spectral, network and simulator code.

use std::ops::{Index, IndexMut};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self::from_vec(r, c, data)
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
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * v`
    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec shape");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `out = self * v`, without allocating.
    #[inline]
    pub fn matvec_into(&self, v: &[T], out: &mut [T]) {
        debug_assert_eq!(self.cols, v.len());
        debug_assert_eq!(self.rows, out.len());
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), v);
        }
    }

    /// `selfᵀ * v`
    pub fn tmatvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len(), "tmatvec shape");
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Max-norm of the elementwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Largest singular value, by Jacobi on `selfᵀ self`.
    pub fn spectral_norm(&self) -> T {
        let gram = self.transpose().matmul(self);
        let (vals, _) = crate::spectral::jacobi_eigen(&gram);
        vals.into_iter().fold(T::zero(), T::max).max(T::zero()).sqrt()
    }

    /// Random orthonormal matrix: Gram-Schmidt on a standard normal draw.
    pub fn random_orthonormal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        loop {
            let mut cols: Vec<Vec<T>> = Vec::with_capacity(n);
            let mut ok = true;
            for _ in 0..n {
                let mut v: Vec<T> = (0..n)
                    .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
                    .collect();
                // two passes of modified Gram-Schmidt
                for _ in 0..2 {
                    for q in &cols {
                        let p = dot(q, &v);
                        for (vi, &qi) in v.iter_mut().zip(q) {
                            *vi -= p * qi;
                        }
                    }
                }
                let norm = dot(&v, &v).sqrt();
                if norm < T::lit(1e-6) {
                    ok = false;
                    break;
                }
                v.iter_mut().for_each(|x| *x /= norm);
                cols.push(v);
            }
            if ok {
                let mut m = Self::zeros(n, n);
                for (j, c) in cols.iter().enumerate() {
                    for (i, &v) in c.iter().enumerate() {
                        m[(i, j)] = v;
                    }
                }
                return m;
            }
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}
