//! Dense row-major matrices; rows are batch samples.

use super::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Matrix { rows, cols, data: vec![value; rows * cols] }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Matrix { rows: rows.len(), cols, data }
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

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    /// Rows `start..end` copied into a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Vertical concatenation. Panics on column mismatch.
    pub fn vstack(parts: &[&Matrix<T>]) -> Self {
        let cols = parts.first().map_or(0, |m| m.cols);
        let rows = parts.iter().map(|m| m.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for m in parts {
            assert_eq!(m.cols, cols, "vstack column mismatch");
            data.extend_from_slice(&m.data);
        }
        Matrix { rows, cols, data }
    }

    /// Horizontal concatenation. Panics on row mismatch.
    pub fn hstack(a: &Matrix<T>, b: &Matrix<T>) -> Self {
        assert_eq!(a.rows, b.rows, "hstack row mismatch");
        let cols = a.cols + b.cols;
        let mut data = Vec::with_capacity(a.rows * cols);
        for i in 0..a.rows {
            data.extend_from_slice(a.row(i));
            data.extend_from_slice(b.row(i));
        }
        Matrix { rows: a.rows, cols, data }
    }

    /// Columns `start..end` copied into a new matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Self {
        let cols = end - start;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[start..end]);
        }
        Matrix { rows: self.rows, cols, data }
    }

    pub fn add_assign(&mut self, other: &Matrix<T>) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `out (m x n) <- x (m x k) * w (k x n) + beta * out`, all row-major slices.
pub fn matmul_into<T: Scalar>(x: &[T], w: &[T], out: &mut [T], m: usize, k: usize, n: usize, beta: T) {
    debug_assert_eq!(x.len(), m * k);
    debug_assert_eq!(w.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the debug assertions above describe the buffers; `out` is a
    // distinct mutable borrow.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            x.as_ptr(),
            k as isize,
            1,
            w.as_ptr(),
            n as isize,
            1,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// `out (k x n) <- x^T * dy + beta * out` where `x` is `m x k`, `dy` is `m x n`.
pub fn matmul_tn_into<T: Scalar>(x: &[T], dy: &[T], out: &mut [T], m: usize, k: usize, n: usize, beta: T) {
    debug_assert_eq!(x.len(), m * k);
    debug_assert_eq!(dy.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    if k == 0 || n == 0 {
        return;
    }
    // SAFETY: x^T is read with swapped strides; shapes checked above.
    unsafe {
        T::gemm(
            k,
            m,
            n,
            T::one(),
            x.as_ptr(),
            1,
            k as isize,
            dy.as_ptr(),
            n as isize,
            1,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// `out (m x k) <- dy (m x n) * w^T + beta * out` where `w` is `k x n`.
pub fn matmul_nt_into<T: Scalar>(dy: &[T], w: &[T], out: &mut [T], m: usize, k: usize, n: usize, beta: T) {
    debug_assert_eq!(dy.len(), m * n);
    debug_assert_eq!(w.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    if m == 0 || k == 0 {
        return;
    }
    // SAFETY: w^T is read with swapped strides; shapes checked above.
    unsafe {
        T::gemm(
            m,
            n,
            k,
            T::one(),
            dy.as_ptr(),
            n as isize,
            1,
            w.as_ptr(),
            1,
            n as isize,
            beta,
            out.as_mut_ptr(),
            k as isize,
            1,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    out[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        out
    }

    fn transpose(a: &[f64], r: usize, c: usize) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = a[i * c + j];
            }
        }
        t
    }

    #[test]
    fn gemm_variants_agree_with_naive_products() {
        let (m, k, n) = (5, 3, 4);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.7).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 1.3).cos()).collect();
        let mut out = vec![0.0; m * n];
        matmul_into(&a, &b, &mut out, m, k, n, 0.0);
        let expect = naive(&a, &b, m, k, n);
        for (x, y) in out.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }

        // a^T (k x m) times c (m x n)
        let c: Vec<f64> = (0..m * n).map(|i| i as f64 * 0.1 - 0.5).collect();
        let mut out_tn = vec![0.0; k * n];
        matmul_tn_into(&a, &c, &mut out_tn, m, k, n, 0.0);
        let expect_tn = naive(&transpose(&a, m, k), &c, k, m, n);
        for (x, y) in out_tn.iter().zip(&expect_tn) {
            assert!((x - y).abs() < 1e-12);
        }

        // c (m x n) times b^T (n x k)
        let mut out_nt = vec![1.0; m * k];
        matmul_nt_into(&c, &b, &mut out_nt, m, k, n, 1.0);
        let expect_nt = naive(&c, &transpose(&b, k, n), m, n, k);
        for (x, y) in out_nt.iter().zip(&expect_nt) {
            assert!((x - (y + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn stacking_and_slicing() {
        let a = Matrix::from_rows(&[[1.0f64, 2.0], [3.0, 4.0]]);
        let b = Matrix::from_rows(&[[5.0f64, 6.0]]);
        let v = Matrix::vstack(&[&a, &b]);
        assert_eq!(v.rows(), 3);
        assert_eq!(v.slice_rows(2, 3), b);
        let h = Matrix::hstack(&a, &a);
        assert_eq!(h.row(1), &[3.0, 4.0, 3.0, 4.0]);
        assert_eq!(h.slice_cols(2, 4), a);
    }
}
