//! Dense row-major tensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense real array. `shape.iter().product() == data.len()` always holds.
///
/// A tensor is a plain value. Whether it takes part in differentiation is
/// decided by `requires_grad` at the moment it is placed on a
/// [`Tape`](crate::autodiff::Tape).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Contract(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape,
            data,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
            requires_grad: false,
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
            requires_grad: false,
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
            requires_grad: false,
        }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
            requires_grad: false,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::dim("from_rows", &[cols], &[bad.len()]));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::matrix(rows.len(), cols, data)
    }

    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| T::of(v)).collect())
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn with_requires_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Rows and columns of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Contract(format!(
                "expected a rank-2 tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn get2(&self, row: usize, col: usize) -> T {
        let cols = self.shape[1];
        self.data[row * cols + col]
    }

    pub fn row(&self, row: usize) -> &[T] {
        let cols = self.shape[1];
        &self.data[row * cols..(row + 1) * cols]
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::Contract(format!(
                "item() needs exactly one element, shape is {:?}",
                self.shape
            )))
        }
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::dim("reshape", &self.shape, &shape));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            requires_grad: false,
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::dim(op, &self.shape, &other.shape));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            requires_grad: false,
        })
    }

    /// In-place `self += other`.
    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim("accumulate", &self.shape, &other.shape));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn squared_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    /// Converts every element to another precision.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::of(v.as_f64())).collect(),
            requires_grad: self.requires_grad,
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::dim("max_abs_diff", &self.shape, &other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max))
    }
}

/// Serialized form: shape plus values widened to `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl<T: Scalar> From<&Tensor<T>> for TensorRecord {
    fn from(t: &Tensor<T>) -> Self {
        Self {
            shape: t.shape.clone(),
            data: t.to_f64_vec(),
        }
    }
}

impl TensorRecord {
    pub fn to_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        Tensor::from_f64(self.shape.clone(), &self.data)
    }
}

// The kernels below work on blocks of rows so each streamed row of the
// larger operand is reused from cache. Every output element still
// accumulates over the shared index in ascending order.
const BLOCK: usize = 4;

/// Row-major `a[m×k] · b[k×n]`.
pub(crate) fn matmul_raw<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    if n == 0 {
        return out;
    }
    for (blk, rows) in out.chunks_mut(BLOCK * n).enumerate() {
        let i0 = blk * BLOCK;
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            for (r, out_row) in rows.chunks_mut(n).enumerate() {
                let av = a[(i0 + r) * k + p];
                if av == T::zero() {
                    continue;
                }
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o = *o + av * bv;
                }
            }
        }
    }
    out
}

/// Row-major `a[m×k] · bᵀ` where `b` is stored `[n×k]`.
pub(crate) fn matmul_bt_raw<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    let dot = |i: usize, j: usize| -> T {
        a[i * k..(i + 1) * k]
            .iter()
            .zip(&b[j * k..(j + 1) * k])
            .map(|(&x, &y)| x * y)
            .sum()
    };
    for i0 in (0..m).step_by(BLOCK) {
        for j0 in (0..n).step_by(BLOCK) {
            if i0 + BLOCK <= m && j0 + BLOCK <= n {
                // Sixteen independent accumulators.
                let mut acc = [[T::zero(); BLOCK]; BLOCK];
                let ar: [&[T]; BLOCK] = std::array::from_fn(|r| &a[(i0 + r) * k..(i0 + r + 1) * k]);
                let br: [&[T]; BLOCK] = std::array::from_fn(|c| &b[(j0 + c) * k..(j0 + c + 1) * k]);
                for p in 0..k {
                    let bv: [T; BLOCK] = std::array::from_fn(|c| br[c][p]);
                    for r in 0..BLOCK {
                        let av = ar[r][p];
                        for c in 0..BLOCK {
                            acc[r][c] = acc[r][c] + av * bv[c];
                        }
                    }
                }
                for r in 0..BLOCK {
                    out[(i0 + r) * n + j0..(i0 + r) * n + j0 + BLOCK].copy_from_slice(&acc[r]);
                }
            } else {
                for i in i0..(i0 + BLOCK).min(m) {
                    for j in j0..(j0 + BLOCK).min(n) {
                        out[i * n + j] = dot(i, j);
                    }
                }
            }
        }
    }
    out
}

/// Row-major `aᵀ · b` where `a` is stored `[k×m]` and `b` is `[k×n]`.
pub(crate) fn matmul_at_raw<T: Scalar>(a: &[T], b: &[T], k: usize, m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for p0 in (0..k).step_by(BLOCK) {
        let ps = p0..(p0 + BLOCK).min(k);
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for p in ps.clone() {
                let av = a[p * m + i];
                if av == T::zero() {
                    continue;
                }
                let b_row = &b[p * n..(p + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o = *o + av * bv;
                }
            }
        }
    }
    out
}
