use serde::{Deserialize, Serialize};

/// Dense row-major matrix. Column vectors are `n x 1`, scalars `1 x 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data length does not match shape");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { rows: 1, cols: 1, data: vec![value] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self { rows: data.len(), cols: 1, data }
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

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn is_vector(&self) -> bool {
        self.cols == 1
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

    /// Value of a `1 x 1` tensor.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on a {}x{} tensor", self.rows, self.cols);
        self.data[0]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        debug_assert_eq!(self.shape(), other.shape());
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// `self * x` for a matrix `self` and a column vector `x`.
    pub fn matvec(&self, x: &Tensor) -> Tensor {
        debug_assert_eq!(self.cols, x.rows);
        let out = self
            .data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(&x.data).map(|(w, v)| w * v).sum())
            .collect();
        Tensor::vector(out)
    }

    /// `self^T * u` for a matrix `self` and a column vector `u`.
    pub fn matvec_t(&self, u: &Tensor) -> Tensor {
        debug_assert_eq!(self.rows, u.rows);
        let mut out = vec![0.0; self.cols];
        for (row, &scale) in self.data.chunks_exact(self.cols).zip(&u.data) {
            if scale == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * scale;
            }
        }
        Tensor::vector(out)
    }

    /// Outer product `u * v^T`.
    pub fn outer(u: &Tensor, v: &Tensor) -> Tensor {
        let mut data = Vec::with_capacity(u.len() * v.len());
        for &a in &u.data {
            data.extend(v.data.iter().map(|&b| a * b));
        }
        Tensor { rows: u.len(), cols: v.len(), data }
    }

    /// Accumulates `u * v^T` into `self`.
    pub fn add_outer(&mut self, u: &Tensor, v: &Tensor) {
        debug_assert_eq!(self.shape(), (u.len(), v.len()));
        for (row, &a) in self.data.chunks_exact_mut(v.len()).zip(&u.data) {
            if a == 0.0 {
                continue;
            }
            for (o, &b) in row.iter_mut().zip(&v.data) {
                *o += a * b;
            }
        }
    }

    pub fn concat(a: &Tensor, b: &Tensor) -> Tensor {
        let mut data = Vec::with_capacity(a.len() + b.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Tensor::vector(data)
    }

    pub fn slice(&self, offset: usize, len: usize) -> Tensor {
        Tensor::vector(self.data[offset..offset + len].to_vec())
    }

    pub fn padded(&self, offset: usize, total: usize) -> Tensor {
        let mut data = vec![0.0; total];
        data[offset..offset + self.len()].copy_from_slice(&self.data);
        Tensor::vector(data)
    }
}

impl From<f64> for Tensor {
    fn from(value: f64) -> Self {
        Tensor::scalar(value)
    }
}
