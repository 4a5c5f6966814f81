//! Reverse-mode automatic differentiation over a per-forward-pass tape.
//!
//! Every primitive appends one node whose inputs are earlier nodes, so the
//! node order is already a topological order; [`Tape::backward`] walks it in
//! reverse, visiting each node once. A tape can be differentiated only
//! once: a second `backward` call returns [`Error::Contract`] and a fresh
//! forward pass on a new tape is required.
//!
//! Only rank-2 `[rows × cols]` operands are used by the layers. The single
//! broadcast is [`Tape::add_bias`], which adds a vector to every row.

mod gradcheck;

pub use gradcheck::{finite_difference_check, finite_difference_check_many, GradCheckReport};

use crate::error::{Error, Result};
use crate::holo::{self, CompositionBackend};
use crate::scalar::Scalar;
use crate::tensor::{matmul_at_raw, matmul_bt_raw, matmul_raw, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pointwise {
    Add,
    Sub,
    Mul,
    Sigmoid,
    Tanh,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Ln(Var),
    Clamp(Var, f64, f64),
    Scale(Var, f64),
    Sum(Var),
    SumRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    Reshape(Var),
    SoftmaxRows(Var),
    CorrelateRows(Var, Var, CompositionBackend),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of the leaves reachable from a loss.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Places a tensor on the tape, keeping its own `requires_grad` flag.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        let rg = value.requires_grad();
        self.push(value, Op::Leaf, rg)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value.with_requires_grad(false), Op::Leaf, false)
    }

    /// A leaf that always receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value.with_requires_grad(true), Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = av.dims2()?;
        let (k2, n) = bv.dims2()?;
        if k != k2 {
            return Err(Error::dim("matmul", av.shape(), bv.shape()));
        }
        let out = Tensor::matrix(m, n, matmul_raw(av.data(), bv.data(), m, k, n))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn pointwise(&mut self, op: Pointwise, operands: &[Var]) -> Result<Var> {
        match (op, operands) {
            (Pointwise::Add, &[a, b]) => self.add(a, b),
            (Pointwise::Sub, &[a, b]) => self.sub(a, b),
            (Pointwise::Mul, &[a, b]) => self.mul(a, b),
            (Pointwise::Sigmoid, &[x]) => Ok(self.sigmoid(x)),
            (Pointwise::Tanh, &[x]) => Ok(self.tanh(x)),
            _ => Err(Error::Contract(format!(
                "{op:?} called with {} operands",
                operands.len()
            ))),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// `x[rows × n] + bias[n]` applied to every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let (_, n) = xv.dims2()?;
        if bv.shape() != [n] {
            return Err(Error::dim("add_bias", xv.shape(), bv.shape()));
        }
        let mut out = xv.clone().with_requires_grad(false);
        for row in out.data_mut().chunks_mut(n) {
            for (o, &b) in row.iter_mut().zip(bv.data()) {
                *o = *o + b;
            }
        }
        let rg = self.any_grad(&[x, bias]);
        Ok(self.push(out, Op::AddBias(x, bias), rg))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Sigmoid(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.tanh());
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Tanh(x), rg)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.ln());
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Ln(x), rg)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping bites.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let (l, h) = (T::of(lo), T::of(hi));
        let out = self.value(x).map(|v| v.max(l).min(h));
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Clamp(x, lo, hi), rg)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let f = T::of(factor);
        let out = self.value(x).map(|v| v * f);
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Scale(x, factor), rg)
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Sum(x), rg)
    }

    /// `[rows × n] -> [rows × 1]`.
    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (rows, n) = xv.dims2()?;
        let data = xv.data().chunks(n.max(1)).map(|r| r.iter().copied().sum()).collect();
        let data = if n == 0 { vec![T::zero(); rows] } else { data };
        let out = Tensor::matrix(rows, 1, data)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::SumRows(x), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_cols of nothing".into()))?;
        let (rows, _) = self.value(*first).dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != rows {
                return Err(Error::dim(
                    "concat_cols",
                    self.value(*first).shape(),
                    self.value(p).shape(),
                ));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let out = Tensor::matrix(rows, total, data)?;
        let rg = self.any_grad(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_rows of nothing".into()))?;
        let (_, cols) = self.value(*first).dims2()?;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if c != cols {
                return Err(Error::dim(
                    "concat_rows",
                    self.value(*first).shape(),
                    self.value(p).shape(),
                ));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::matrix(rows, cols, data)?;
        let rg = self.any_grad(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Columns `start..start + len` of a rank-2 tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = xv.dims2()?;
        if start + len > cols {
            return Err(Error::dim("slice_cols", xv.shape(), &[start, len]));
        }
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&xv.data()[r * cols + start..r * cols + start + len]);
        }
        let out = Tensor::matrix(rows, len, data)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::SliceCols(x, start), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(x).clone().with_requires_grad(false).reshape(shape)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    /// Max-stabilized softmax over each row.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (_, n) = xv.dims2()?;
        if !xv.all_finite() {
            return Err(Error::Numeric("softmax over non-finite logits".into()));
        }
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(n) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total = total + *v;
            }
            for v in row.iter_mut() {
                *v = *v / total;
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::SoftmaxRows(x), rg))
    }

    /// Row-wise circular correlation of two `[rows × d]` tensors.
    pub fn correlate_rows(&mut self, q: Var, a: Var, backend: CompositionBackend) -> Result<Var> {
        let (qv, av) = (self.value(q), self.value(a));
        let (rows, d) = qv.dims2()?;
        if qv.shape() != av.shape() {
            return Err(Error::dim("correlate_rows", qv.shape(), av.shape()));
        }
        if d == 0 {
            return Err(Error::Contract("correlation of zero-length vectors".into()));
        }
        let out = Tensor::matrix(rows, d, holo::correlate_rows(qv.data(), av.data(), d, backend))?;
        let rg = self.any_grad(&[q, a]);
        Ok(self.push(out, Op::CorrelateRows(q, a, backend), rg))
    }

    /// Back-propagates from a one-element `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::Contract(
                "backward already ran on this tape; record a fresh forward pass".into(),
            ));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.consumed = true;

        let mut pending: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        let mut leaves: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        pending[loss.0] = Some(Tensor::full(self.value(loss).shape(), T::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = pending[idx].take() else {
                continue;
            };
            let contributions = self.local_gradients(idx, &g)?;
            if matches!(node.op, Op::Leaf) {
                leaves[idx] = Some(g);
                continue;
            }
            for (var, grad) in contributions {
                if !self.nodes[var.0].requires_grad {
                    continue;
                }
                match &mut pending[var.0] {
                    Some(acc) => acc.accumulate(&grad)?,
                    slot @ None => *slot = Some(grad),
                }
            }
        }
        Ok(Gradients { grads: leaves })
    }

    fn local_gradients(&self, idx: usize, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let node = &self.nodes[idx];
        let y = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = val(*a).dims2()?;
                let (_, n) = val(*b).dims2()?;
                if wants(*a) {
                    let ga = matmul_bt_raw(g.data(), val(*b).data(), m, n, k);
                    out.push((*a, Tensor::matrix(m, k, ga)?));
                }
                if wants(*b) {
                    let gb = matmul_at_raw(val(*a).data(), g.data(), m, k, n);
                    out.push((*b, Tensor::matrix(k, n, gb)?));
                }
            }
            Op::Add(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::Sub(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.map(|v| -v)));
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    out.push((*a, g.zip_map(val(*b), "mul", |x, y| x * y)?));
                }
                if wants(*b) {
                    out.push((*b, g.zip_map(val(*a), "mul", |x, y| x * y)?));
                }
            }
            Op::AddBias(x, bias) => {
                out.push((*x, g.clone()));
                if wants(*bias) {
                    let n = val(*bias).len();
                    let mut gb = vec![T::zero(); n];
                    for row in g.data().chunks(n) {
                        for (acc, &v) in gb.iter_mut().zip(row) {
                            *acc = *acc + v;
                        }
                    }
                    out.push((*bias, Tensor::vector(gb)));
                }
            }
            Op::Sigmoid(x) => {
                out.push((*x, g.zip_map(y, "sigmoid", |gv, s| gv * s * (T::one() - s))?));
            }
            Op::Tanh(x) => {
                out.push((*x, g.zip_map(y, "tanh", |gv, t| gv * (T::one() - t * t))?));
            }
            Op::Ln(x) => {
                out.push((*x, g.zip_map(val(*x), "ln", |gv, xv| gv / xv)?));
            }
            Op::Clamp(x, lo, hi) => {
                let (l, h) = (T::of(*lo), T::of(*hi));
                out.push((
                    *x,
                    g.zip_map(val(*x), "clamp", |gv, xv| if xv < l || xv > h { T::zero() } else { gv })?,
                ));
            }
            Op::Scale(x, f) => {
                let f = T::of(*f);
                out.push((*x, g.map(|v| v * f)));
            }
            Op::Sum(x) => {
                out.push((*x, Tensor::full(val(*x).shape(), g.data()[0])));
            }
            Op::SumRows(x) => {
                let (rows, n) = val(*x).dims2()?;
                let mut gx = Vec::with_capacity(rows * n);
                for r in 0..rows {
                    gx.extend(std::iter::repeat_n(g.data()[r], n));
                }
                out.push((*x, Tensor::matrix(rows, n, gx)?));
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = y.dims2()?;
                let mut offset = 0;
                for p in parts {
                    let (_, w) = val(*p).dims2()?;
                    if wants(*p) {
                        let mut gp = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            gp.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                        }
                        out.push((*p, Tensor::matrix(rows, w, gp)?));
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = val(*p).len();
                    if wants(*p) {
                        let gp = g.data()[offset..offset + n].to_vec();
                        out.push((*p, Tensor::new(val(*p).shape().to_vec(), gp)?));
                    }
                    offset += n;
                }
            }
            Op::SliceCols(x, start) => {
                let (rows, cols) = val(*x).dims2()?;
                let (_, len) = y.dims2()?;
                let mut gx = Tensor::zeros(&[rows, cols]);
                for r in 0..rows {
                    gx.data_mut()[r * cols + start..r * cols + start + len]
                        .copy_from_slice(&g.data()[r * len..(r + 1) * len]);
                }
                out.push((*x, gx));
            }
            Op::Reshape(x) => {
                out.push((*x, g.clone().reshape(val(*x).shape().to_vec())?));
            }
            Op::SoftmaxRows(x) => {
                let (_, n) = y.dims2()?;
                let mut gx = Vec::with_capacity(y.len());
                for (yr, gr) in y.data().chunks(n).zip(g.data().chunks(n)) {
                    let inner: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    gx.extend(yr.iter().zip(gr).map(|(&a, &b)| a * (b - inner)));
                }
                out.push((*x, Tensor::new(y.shape().to_vec(), gx)?));
            }
            Op::CorrelateRows(q, a, backend) => {
                let (rows, d) = y.dims2()?;
                if wants(*q) {
                    let gq = holo::correlate_rows(g.data(), val(*a).data(), d, *backend);
                    out.push((*q, Tensor::matrix(rows, d, gq)?));
                }
                if wants(*a) {
                    let ga = holo::convolve_rows(val(*q).data(), g.data(), d, *backend);
                    out.push((*a, Tensor::matrix(rows, d, ga)?));
                }
            }
        }
        Ok(out)
    }
}
