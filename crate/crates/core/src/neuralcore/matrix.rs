use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} ", self.rows, self.cols)?;
        f.debug_list().entries(self.data.chunks(self.cols.max(1))).finish()
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn scalar(value: f64) -> Self {
        Self::filled(1, 1, value)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| f(*x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.shape(), other.shape());
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: f64, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn sum(&self) -> f64 {
        let mut acc = 0.0;
        for x in &self.data {
            acc += x;
        }
        acc
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Column sums as a `1 × cols` matrix.
    pub fn col_sums(&self) -> Self {
        let mut out = Self::zeros(1, self.cols);
        for r in 0..self.rows {
            for (o, x) in out.data.iter_mut().zip(self.row(r)) {
                *o += x;
            }
        }
        out
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            data.extend_from_slice(self.row(r));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// `op(a) · op(b)` accumulated into `out` with `beta` scaling of the old
    /// contents, where `op` optionally transposes.
    fn gemm(a: &Matrix, ta: bool, b: &Matrix, tb: bool, out: &mut Matrix, beta: f64) {
        let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
        let (k2, n) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
        assert_eq!(k, k2, "inner dimensions differ");
        assert_eq!(out.shape(), (m, n), "output shape");
        let (rsa, csa) = if ta { (1, a.cols as isize) } else { (a.cols as isize, 1) };
        let (rsb, csb) = if tb { (1, b.cols as isize) } else { (b.cols as isize, 1) };
        if m == 0 || n == 0 {
            return;
        }
        if k == 0 {
            for x in &mut out.data {
                *x *= beta;
            }
            return;
        }
        // SAFETY: strides and dimensions describe the exact extents of the
        // three buffers, checked above.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.data.as_ptr(),
                rsa,
                csa,
                b.data.as_ptr(),
                rsb,
                csb,
                beta,
                out.data.as_mut_ptr(),
                out.cols as isize,
                1,
            );
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "matmul {}x{} · {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        Self::gemm(self, false, other, false, &mut out, 0.0);
        Ok(out)
    }

    /// `out += selfᵀ · other`.
    pub(crate) fn add_tn_product(&self, other: &Matrix, out: &mut Matrix) {
        Self::gemm(self, true, other, false, out, 1.0);
    }

    /// `out += self · otherᵀ`.
    pub(crate) fn add_nt_product(&self, other: &Matrix, out: &mut Matrix) {
        Self::gemm(self, false, other, true, out, 1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    fn seq(rows: usize, cols: usize, off: f64) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|k| (k as f64 * 0.37 + off).sin()).collect()).unwrap()
    }

    #[test]
    fn products_match_naive() {
        let a = seq(7, 5, 0.1);
        let b = seq(5, 3, 0.7);
        let c = a.matmul(&b).unwrap();
        let n = naive(&a, &b);
        for (x, y) in c.as_slice().iter().zip(n.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }

        // aᵀ·c, with a 7x5 and c 7x3 -> 5x3
        let mut tn = Matrix::zeros(5, 3);
        a.add_tn_product(&c, &mut tn);
        let at = Matrix::from_vec(5, 7, (0..35).map(|k| a.get(k % 7, k / 7)).collect()).unwrap();
        let expect = naive(&at, &c);
        for (x, y) in tn.as_slice().iter().zip(expect.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }

        // c·bᵀ -> 7x5
        let mut nt = Matrix::zeros(7, 5);
        c.add_nt_product(&b, &mut nt);
        let bt = Matrix::from_vec(3, 5, (0..15).map(|k| b.get(k % 5, k / 5)).collect()).unwrap();
        let expect = naive(&c, &bt);
        for (x, y) in nt.as_slice().iter().zip(expect.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        assert!(seq(2, 3, 0.0).matmul(&seq(2, 3, 0.0)).is_err());
        assert!(Matrix::from_vec(2, 2, vec![1.0]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn col_sums_and_select() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(m.col_sums().as_slice(), &[9.0, 12.0]);
        assert_eq!(m.select_rows(&[2, 0]).to_rows(), vec![vec![5.0, 6.0], vec![1.0, 2.0]]);
    }
}
