//! Small row-major dense matrix with the handful of kernels the samplet
//! machinery needs (products and a Householder QR with explicit `Q`).

use std::ops::{Index, IndexMut};

use crate::scalar::Scalar;

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

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "buffer does not match shape");
        Self { rows, cols, data }
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
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self * rhs`
    pub fn matmul(&self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self^T * rhs`
    pub fn tr_matmul(&self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.rows, rhs.rows, "row counts differ");
        let mut out = Matrix::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let rhs_row = rhs.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * v`
    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| crate::scalar::dot(self.row(i), v))
            .collect()
    }

    /// `self^T * v`
    pub fn tr_matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len());
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

    pub fn frobenius_norm(&self) -> T {
        crate::scalar::norm2(&self.data)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// Copies the columns `cols` into a new matrix.
    pub fn columns(&self, cols: std::ops::Range<usize>) -> Matrix<T> {
        let width = cols.len();
        Matrix::from_fn(self.rows, width, |i, j| self[(i, cols.start + j)])
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x.as_f64()).collect(),
        }
    }

    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)].as_f64())
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Householder QR of an `n x m` matrix without pivoting.
///
/// Returns the full orthogonal factor `Q` (`n x n`) and the upper trapezoidal
/// `R` (`n x m`) with `a = Q R`. Reflector signs are chosen to avoid
/// cancellation, so the factorization is deterministic for a given input.
pub fn householder_qr<T: Scalar>(a: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
    let n = a.rows();
    let m = a.cols();
    let mut r = a.clone();
    let mut reflectors: Vec<(usize, Vec<T>)> = Vec::new();

    for j in 0..m.min(n.saturating_sub(1)) {
        let mut v: Vec<T> = (j..n).map(|i| r[(i, j)]).collect();
        let alpha = crate::scalar::norm2(&v);
        if alpha == T::zero() {
            continue;
        }
        let sign = if v[0] >= T::zero() {
            T::one()
        } else {
            -T::one()
        };
        v[0] += sign * alpha;
        let vnorm2 = crate::scalar::dot(&v, &v);
        if vnorm2 == T::zero() {
            continue;
        }
        let two = T::of(2.0);
        for col in j..m {
            let s: T = (j..n).map(|i| v[i - j] * r[(i, col)]).sum();
            let f = two * s / vnorm2;
            for i in j..n {
                r[(i, col)] -= f * v[i - j];
            }
        }
        for i in (j + 1)..n {
            r[(i, j)] = T::zero();
        }
        reflectors.push((j, v));
    }

    // Q = H_0 H_1 ... H_{k-1}, accumulated right-to-left on the identity.
    let mut q = Matrix::identity(n);
    let two = T::of(2.0);
    for (j, v) in reflectors.iter().rev() {
        let vnorm2 = crate::scalar::dot(v, v);
        for col in 0..n {
            let s: T = (*j..n).map(|i| v[i - j] * q[(i, col)]).sum();
            if s == T::zero() {
                continue;
            }
            let f = two * s / vnorm2;
            for i in *j..n {
                q[(i, col)] -= f * v[i - j];
            }
        }
    }
    (q, r)
}

/// Lower Cholesky factor of a symmetric positive definite matrix, or `None`
/// when a nonpositive pivot appears.
pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Option<Matrix<T>> {
    assert_eq!(a.rows(), a.cols(), "square matrix required");
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Solves `L L^T x = b` for a lower Cholesky factor `L`.
pub fn cholesky_solve<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    assert_eq!(b.len(), n);
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let t = l[(i, k)] * y[k];
            y[i] -= t;
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let t = l[(k, i)] * y[k];
            y[i] -= t;
        }
        y[i] /= l[(i, i)];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_reconstructs_and_is_orthogonal() {
        let a = Matrix::from_fn(7, 3, |i, j| {
            ((i * 3 + j * 5) % 11) as f64 - 4.0 + 0.1 * j as f64
        });
        let (q, r) = householder_qr(&a);
        let qa = q.matmul(&r);
        for i in 0..7 {
            for j in 0..3 {
                assert!((qa[(i, j)] - a[(i, j)]).abs() < 1e-12);
            }
        }
        let qtq = q.tr_matmul(&q);
        for i in 0..7 {
            for j in 0..7 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[(i, j)] - e).abs() < 1e-13);
            }
            for j in 0..3.min(i) {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn qr_handles_rank_deficient_and_wide_input() {
        // two identical columns, more columns than rows
        let a: Matrix<f64> = Matrix::from_row_major(2, 3, vec![1.0, 1.0, 2.0, 1.0, 1.0, -1.0]);
        let (q, r) = householder_qr(&a);
        let qa = q.matmul(&r);
        for (x, y) in qa.as_slice().iter().zip(a.as_slice()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn products_agree() {
        let a = Matrix::from_fn(3, 4, |i, j| (i + 2 * j) as f64);
        let b = Matrix::from_fn(3, 2, |i, j| (i * j) as f64 - 1.0);
        let direct = a.transpose().matmul(&b);
        assert_eq!(direct, a.tr_matmul(&b));
        let v = [1.0, -2.0, 0.5];
        assert_eq!(a.tr_matvec(&v), a.transpose().matvec(&v));
    }

    #[test]
    fn cholesky_agrees_with_nalgebra() {
        let b = Matrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let a = b.tr_matmul(&b);
        let a = Matrix::from_fn(6, 6, |i, j| a[(i, j)] + if i == j { 1.0 } else { 0.0 });
        let rhs: Vec<f64> = (0..6).map(|i| i as f64 + 0.5).collect();
        let x = cholesky_solve(&cholesky(&a).unwrap(), &rhs);
        let oracle = a
            .to_nalgebra()
            .cholesky()
            .unwrap()
            .solve(&nalgebra::DVector::from_vec(rhs));
        for (u, v) in x.iter().zip(oracle.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
        let indefinite = Matrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 1.0]);
        assert!(cholesky(&indefinite).is_none());
    }
}
