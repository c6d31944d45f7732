//! Dense volumes and matrices in a single canonical layout.
//!
//! `Tensor3` stores `(depth, height, width)` with depth slowest and width
//! fastest: entry `(i, j, k)` lives at `(i * height + j) * width + k`.
//! `Matrix` is row-major. Every stacking order and file format in the crate
//! refers to these layouts.

use crate::error::{dim_err, Result};

pub type Shape3 = (usize, usize, usize);

fn check_positive(dims: &[usize], what: &str) -> Result<()> {
    if dims.iter().any(|&d| d == 0) {
        return Err(dim_err(format!("{what} dimensions must be positive, got {dims:?}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    shape: Shape3,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(shape: Shape3, data: Vec<f64>) -> Result<Self> {
        check_positive(&[shape.0, shape.1, shape.2], "tensor")?;
        let expected = shape.0 * shape.1 * shape.2;
        if data.len() != expected {
            return Err(dim_err(format!(
                "tensor {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor3 { shape, data })
    }

    pub fn zeros(shape: Shape3) -> Result<Self> {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape3, value: f64) -> Result<Self> {
        Self::new(shape, vec![value; shape.0 * shape.1 * shape.2])
    }

    pub fn from_fn(shape: Shape3, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        check_positive(&[shape.0, shape.1, shape.2], "tensor")?;
        let mut data = Vec::with_capacity(shape.0 * shape.1 * shape.2);
        for i in 0..shape.0 {
            for j in 0..shape.1 {
                for k in 0..shape.2 {
                    data.push(f(i, j, k));
                }
            }
        }
        Ok(Tensor3 { shape, data })
    }

    #[inline]
    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.shape.0 && j < self.shape.1 && k < self.shape.2);
        (i * self.shape.1 + j) * self.shape.2 + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Depth slice `i` as a `height x width` matrix.
    pub fn slice(&self, i: usize) -> Result<Matrix> {
        if i >= self.shape.0 {
            return Err(dim_err(format!("slice {i} out of range for depth {}", self.shape.0)));
        }
        let plane = self.shape.1 * self.shape.2;
        Matrix::new(self.shape.1, self.shape.2, self.data[i * plane..(i + 1) * plane].to_vec())
    }

    /// Copies the `size` block whose lowest corner is `corner`, in canonical order.
    pub fn block(&self, corner: Shape3, size: Shape3) -> Result<Vec<f64>> {
        let (d, h, w) = self.shape;
        if corner.0 + size.0 > d || corner.1 + size.1 > h || corner.2 + size.2 > w {
            return Err(dim_err(format!(
                "block {size:?} at {corner:?} exceeds tensor {:?}",
                self.shape
            )));
        }
        let mut out = Vec::with_capacity(size.0 * size.1 * size.2);
        for i in corner.0..corner.0 + size.0 {
            for j in corner.1..corner.1 + size.1 {
                let start = self.offset(i, j, corner.2);
                out.extend_from_slice(&self.data[start..start + size.2]);
            }
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor3 {
        Tensor3 { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_positive(&[rows, cols], "matrix")?;
        if data.len() != rows * cols {
            return Err(dim_err(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_positive(&[rows, cols], "matrix")?;
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
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
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(dim_err(format!(
                "matvec: matrix has {} columns, vector has {} entries",
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    /// `self^T * y`.
    pub fn matvec_transposed(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(dim_err(format!(
                "transposed matvec: matrix has {} rows, vector has {} entries",
                self.rows,
                y.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            axpy(yr, self.row(r), &mut out);
        }
        Ok(out)
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
