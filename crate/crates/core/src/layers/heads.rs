//! Comparison heads mapping a question/answer representation pair to two
//! class logits.
//!
//! * [`DenseHead`] with [`Composition::Correlation`] is the holographic
//!   layer: `W_f · act(W_h · [q ⋆ a, extras] + b_h) + b_f`.
//! * [`DenseHead`] with [`Composition::Concatenation`] is the same layer
//!   over `[q, a, extras]`, twice as wide.
//! * [`NtnHead`] is the neural tensor layer
//!   `u · tanh(qᵀ M^{[1:k]} a + V [q, a] + b) + u_b`.
//!
//! Optional extras are the bilinear similarity `qᵀ M a` and the 4-wide
//! word-overlap feature vector; both are appended before the hidden layer.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::holo::CompositionBackend;
use crate::layers::params::{Init, ParamId, ParamStore};
use crate::scalar::Scalar;

/// Width of the word-overlap feature vector.
pub const OVERLAP_FEATURES: usize = 4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply<T: Scalar>(self, tape: &mut Tape<T>, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Composition {
    Correlation(CompositionBackend),
    Concatenation,
}

impl Composition {
    pub fn width(self, d: usize) -> usize {
        match self {
            Composition::Correlation(_) => d,
            Composition::Concatenation => 2 * d,
        }
    }
}

/// Which optional inputs a head consumes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HeadExtras {
    pub bilinear_similarity: bool,
    pub overlap_features: bool,
}

impl HeadExtras {
    pub fn width(self) -> usize {
        usize::from(self.bilinear_similarity) + if self.overlap_features { OVERLAP_FEATURES } else { 0 }
    }
}

/// `qᵀ M a` for every row: `q, a` are `[B × n]`, `m` is `[n × n]`; gives `[B × 1]`.
pub fn bilinear_similarity<T: Scalar>(tape: &mut Tape<T>, q: Var, m: Var, a: Var) -> Result<Var> {
    let qm = tape.matmul(q, m)?;
    let prod = tape.mul(qm, a)?;
    tape.sum_rows(prod)
}

/// Max-stabilized two-class softmax.
pub fn softmax2<T: Scalar>(logits: [T; 2]) -> Result<[T; 2]> {
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric(format!("softmax over non-finite logits {logits:?}")));
    }
    let max = logits[0].max(logits[1]);
    let e0 = (logits[0] - max).exp();
    let e1 = (logits[1] - max).exp();
    let total = e0 + e1;
    Ok([e0 / total, e1 / total])
}

#[allow(clippy::too_many_arguments)]
fn append_extras<T: Scalar>(
    tape: &mut Tape<T>,
    params: &[Var],
    base: Var,
    q: Var,
    a: Var,
    sim: Option<ParamId>,
    wants_features: bool,
    features: Option<Var>,
) -> Result<Var> {
    let mut parts = vec![base];
    if let Some(m) = sim {
        parts.push(bilinear_similarity(tape, q, params[m.0], a)?);
    }
    match (wants_features, features) {
        (true, Some(f)) => {
            let (rows, w) = tape.value(f).dims2()?;
            let (b_rows, _) = tape.value(base).dims2()?;
            if w != OVERLAP_FEATURES || rows != b_rows {
                return Err(Error::dim("overlap features", &[b_rows, OVERLAP_FEATURES], &[rows, w]));
            }
            parts.push(f);
        }
        (true, None) => {
            return Err(Error::Config(
                "head expects overlap features but none were given".into(),
            ));
        }
        (false, Some(_)) => {
            return Err(Error::Config(
                "overlap features given to a head built without them".into(),
            ));
        }
        (false, None) => {}
    }
    if parts.len() == 1 {
        Ok(base)
    } else {
        tape.concat_cols(&parts)
    }
}

fn apply_dropout<T: Scalar>(tape: &mut Tape<T>, x: Var, mask: Option<Var>) -> Result<Var> {
    match mask {
        Some(m) => tape.mul(x, m),
        None => Ok(x),
    }
}

/// Composition followed by one dense hidden layer and a two-class output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHead {
    pub composition: Composition,
    pub extras: HeadExtras,
    pub activation: Activation,
    pub repr_dim: usize,
    pub hidden: usize,
    pub w_h: ParamId,
    pub b_h: ParamId,
    pub w_f: ParamId,
    pub b_f: ParamId,
    pub m_sim: Option<ParamId>,
}

impl DenseHead {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        repr_dim: usize,
        hidden: usize,
        composition: Composition,
        extras: HeadExtras,
        activation: Activation,
        init: &mut Init<'_>,
    ) -> Result<Self> {
        if repr_dim == 0 || hidden == 0 {
            return Err(Error::Config(format!(
                "head needs positive sizes, got d={repr_dim} h={hidden}"
            )));
        }
        let width = composition.width(repr_dim) + extras.width();
        let m_sim = extras.bilinear_similarity.then(|| {
            store.add(
                format!("{prefix}.m_sim"),
                init.glorot(&[repr_dim, repr_dim], repr_dim, repr_dim),
            )
        });
        let w_h = store.add(format!("{prefix}.w_h"), init.glorot(&[width, hidden], width, hidden));
        let b_h = store.add(format!("{prefix}.b_h"), init.zeros(&[hidden]));
        let w_f = store.add(format!("{prefix}.w_f"), init.glorot(&[hidden, 2], hidden, 2));
        let b_f = store.add(format!("{prefix}.b_f"), init.zeros(&[2]));
        Ok(Self {
            composition,
            extras,
            activation,
            repr_dim,
            hidden,
            w_h,
            b_h,
            w_f,
            b_f,
            m_sim,
        })
    }

    /// Width of the vector entering `W_h` (and of the dropout mask).
    pub fn input_width(&self) -> usize {
        self.composition.width(self.repr_dim) + self.extras.width()
    }

    /// `width·h + h + 2h + 2`, plus `d²` when the bilinear similarity is on.
    pub fn parameter_count(&self) -> usize {
        let sim = if self.extras.bilinear_similarity {
            self.repr_dim * self.repr_dim
        } else {
            0
        };
        self.input_width() * self.hidden + self.hidden + 2 * self.hidden + 2 + sim
    }

    /// `q`, `a` are `[B × d]`; returns `[B × 2]` logits.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &[Var],
        q: Var,
        a: Var,
        features: Option<Var>,
        dropout_mask: Option<Var>,
    ) -> Result<Var> {
        let composed = match self.composition {
            Composition::Correlation(backend) => tape.correlate_rows(q, a, backend)?,
            Composition::Concatenation => tape.concat_cols(&[q, a])?,
        };
        let joined = append_extras(
            tape,
            params,
            composed,
            q,
            a,
            self.m_sim,
            self.extras.overlap_features,
            features,
        )?;
        let joined = apply_dropout(tape, joined, dropout_mask)?;
        let h = tape.matmul(joined, params[self.w_h.0])?;
        let h = tape.add_bias(h, params[self.b_h.0])?;
        let h = self.activation.apply(tape, h);
        let logits = tape.matmul(h, params[self.w_f.0])?;
        tape.add_bias(logits, params[self.b_f.0])
    }
}

/// Neural tensor layer with `k` bilinear slices and a `k × 2` output map.
///
/// `M` is stored as one `[n × k·n]` matrix whose column block `s` is slice
/// `M_s`; `V` is stored transposed as `[2n × k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NtnHead {
    pub repr_dim: usize,
    pub slices: usize,
    pub extras: HeadExtras,
    pub m: ParamId,
    pub v: ParamId,
    pub b: ParamId,
    pub u: ParamId,
    pub u_bias: ParamId,
    pub m_sim: Option<ParamId>,
}

impl NtnHead {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        repr_dim: usize,
        slices: usize,
        extras: HeadExtras,
        init: &mut Init<'_>,
    ) -> Result<Self> {
        if repr_dim == 0 || slices == 0 {
            return Err(Error::Config(format!(
                "tensor layer needs positive sizes, got n={repr_dim} k={slices}"
            )));
        }
        let n = repr_dim;
        let m_sim = extras
            .bilinear_similarity
            .then(|| store.add(format!("{prefix}.m_sim"), init.glorot(&[n, n], n, n)));
        let m = store.add(format!("{prefix}.m"), init.glorot(&[n, slices * n], n, n));
        let v = store.add(format!("{prefix}.v"), init.glorot(&[2 * n, slices], 2 * n, slices));
        let b = store.add(format!("{prefix}.b"), init.zeros(&[slices]));
        let out_in = slices + extras.width();
        let u = store.add(format!("{prefix}.u"), init.glorot(&[out_in, 2], out_in, 2));
        let u_bias = store.add(format!("{prefix}.u_bias"), init.zeros(&[2]));
        Ok(Self {
            repr_dim,
            slices,
            extras,
            m,
            v,
            b,
            u,
            u_bias,
            m_sim,
        })
    }

    /// Width of the vector entering the output map `u`.
    pub fn input_width(&self) -> usize {
        self.slices + self.extras.width()
    }

    /// `n²k + 2nk + k + 2k + 2` without extras.
    pub fn parameter_count(&self) -> usize {
        let (n, k) = (self.repr_dim, self.slices);
        let sim = if self.extras.bilinear_similarity { n * n } else { 0 };
        n * n * k + 2 * n * k + k + 2 * self.input_width() + 2 + sim
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &[Var],
        q: Var,
        a: Var,
        features: Option<Var>,
        dropout_mask: Option<Var>,
    ) -> Result<Var> {
        let n = self.repr_dim;
        let (_, qd) = tape.value(q).dims2()?;
        if qd != n || tape.value(q).shape() != tape.value(a).shape() {
            return Err(Error::dim("ntn", tape.value(q).shape(), tape.value(a).shape()));
        }
        let qm = tape.matmul(q, params[self.m.0])?;
        let mut bilinear = Vec::with_capacity(self.slices);
        for s in 0..self.slices {
            let block = tape.slice_cols(qm, s * n, n)?;
            let prod = tape.mul(block, a)?;
            bilinear.push(tape.sum_rows(prod)?);
        }
        let bil = tape.concat_cols(&bilinear)?;
        let qa = tape.concat_cols(&[q, a])?;
        let lin = tape.matmul(qa, params[self.v.0])?;
        let pre = tape.add(bil, lin)?;
        let pre = tape.add_bias(pre, params[self.b.0])?;
        let hidden = tape.tanh(pre);
        let joined = append_extras(
            tape,
            params,
            hidden,
            q,
            a,
            self.m_sim,
            self.extras.overlap_features,
            features,
        )?;
        let joined = apply_dropout(tape, joined, dropout_mask)?;
        let logits = tape.matmul(joined, params[self.u.0])?;
        tape.add_bias(logits, params[self.u_bias.0])
    }
}
