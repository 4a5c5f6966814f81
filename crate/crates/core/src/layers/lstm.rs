//! Stacked unidirectional LSTM.
//!
//! ```text
//! i_t = σ(W_i x_t + U_i h_{t−1} + b_i)
//! f_t = σ(W_f x_t + U_f h_{t−1} + b_f)
//! c_t = f_t ⊙ c_{t−1} + i_t ⊙ tanh(W_c x_t + U_c h_{t−1} + b_c)
//! o_t = σ(W_o x_t + U_o h_{t−1} + b_o)
//! h_t = o_t ⊙ tanh(c_t)
//! ```
//!
//! The four gates share one `[input × 4d]` matrix `W`, one `[d × 4d]`
//! matrix `U` and one `[4d]` bias, with column blocks ordered `i, f, c, o`.
//! `h_0 = c_0 = 0`. Layer `ℓ > 0` consumes the hidden sequence of `ℓ − 1`.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::layers::params::{Init, ParamId, ParamStore};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub input: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub layers: Vec<LstmLayer>,
    pub hidden: usize,
}

/// Result of running an [`Lstm`] over a batch of sequences.
#[derive(Debug, Clone)]
pub struct LstmOutput {
    /// Top-layer hidden state per timestep, each `[B × d]`.
    pub hidden: Vec<Var>,
    /// Top-layer hidden state at the final timestep, `[B × d]`.
    pub last: Var,
}

/// Scalar parameters of one layer: `4·(input·d + d·d + d)`.
pub fn layer_parameter_count(input: usize, hidden: usize) -> usize {
    4 * (input * hidden + hidden * hidden + hidden)
}

impl Lstm {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        init: &mut Init<'_>,
    ) -> Result<Self> {
        if layers == 0 || hidden == 0 || input == 0 {
            return Err(Error::Config(format!(
                "LSTM needs positive sizes, got input={input} hidden={hidden} layers={layers}"
            )));
        }
        let mut out = Vec::with_capacity(layers);
        for l in 0..layers {
            let inp = if l == 0 { input } else { hidden };
            let w = store.add(format!("{prefix}.{l}.w"), init.glorot(&[inp, 4 * hidden], inp, hidden));
            let u = store.add(
                format!("{prefix}.{l}.u"),
                init.glorot(&[hidden, 4 * hidden], hidden, hidden),
            );
            let mut bias = init.zeros::<T>(&[4 * hidden]);
            for v in &mut bias.data_mut()[hidden..2 * hidden] {
                *v = T::one();
            }
            let b = store.add(format!("{prefix}.{l}.b"), bias);
            out.push(LstmLayer { w, u, b, input: inp });
        }
        Ok(Self { layers: out, hidden })
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| layer_parameter_count(l.input, self.hidden))
            .sum()
    }

    /// Runs every layer over `inputs` (one `[B × input]` var per timestep).
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, params: &[Var], inputs: &[Var]) -> Result<LstmOutput> {
        if inputs.is_empty() {
            return Err(Error::Contract("LSTM over a zero-length sequence".into()));
        }
        let d = self.hidden;
        let mut seq = inputs.to_vec();
        for layer in &self.layers {
            let (w, u, b) = (params[layer.w.0], params[layer.u.0], params[layer.b.0]);
            let mut state: Option<(Var, Var)> = None;
            let mut next = Vec::with_capacity(seq.len());
            for &x in &seq {
                let mut z = tape.matmul(x, w)?;
                if let Some((h, _)) = state {
                    let rec = tape.matmul(h, u)?;
                    z = tape.add(z, rec)?;
                }
                let z = tape.add_bias(z, b)?;
                let zi = tape.slice_cols(z, 0, d)?;
                let zf = tape.slice_cols(z, d, d)?;
                let zc = tape.slice_cols(z, 2 * d, d)?;
                let zo = tape.slice_cols(z, 3 * d, d)?;
                let i = tape.sigmoid(zi);
                let g = tape.tanh(zc);
                let o = tape.sigmoid(zo);
                let mut c = tape.mul(i, g)?;
                if let Some((_, c_prev)) = state {
                    let f = tape.sigmoid(zf);
                    let keep = tape.mul(f, c_prev)?;
                    c = tape.add(keep, c)?;
                }
                let tc = tape.tanh(c);
                let h = tape.mul(o, tc)?;
                state = Some((h, c));
                next.push(h);
            }
            seq = next;
        }
        let last = *seq.last().expect("non-empty sequence");
        Ok(LstmOutput { hidden: seq, last })
    }

    /// Single-sequence form: `x` is `[L × n]`; returns (`[L × d]`, `[d]`).
    pub fn forward_sequence<T: Scalar>(&self, tape: &mut Tape<T>, params: &[Var], x: Var) -> Result<(Var, Var)> {
        let (len, _) = tape.value(x).dims2()?;
        if len == 0 {
            return Err(Error::Contract("LSTM over a zero-length sequence".into()));
        }
        let steps = (0..len).map(|t| row_of(tape, x, t)).collect::<Result<Vec<_>>>()?;
        let out = self.forward(tape, params, &steps)?;
        let all = tape.concat_rows(&out.hidden)?;
        let last = tape.reshape(out.last, vec![self.hidden])?;
        Ok((all, last))
    }
}

// Row t of a matrix var as a [1 × n] var.
fn row_of<T: Scalar>(tape: &mut Tape<T>, x: Var, t: usize) -> Result<Var> {
    let (_, n) = tape.value(x).dims2()?;
    if tape.requires_grad(x) {
        return Err(Error::Contract(
            "forward_sequence takes constant inputs; embed each timestep as its own var instead".into(),
        ));
    }
    let row = tape.value(x).row(t).to_vec();
    Ok(tape.constant(crate::tensor::Tensor::matrix(1, n, row)?))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::autodiff::finite_difference_check_many;
    use crate::tensor::Tensor;

    fn build(input: usize, hidden: usize, layers: usize, seed: u64) -> (Lstm, ParamStore<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let lstm = Lstm::new(&mut store, "lstm", input, hidden, layers, &mut Init { rng: &mut rng }).unwrap();
        (lstm, store)
    }

    #[test]
    fn parameter_count_closed_form() {
        assert_eq!(layer_parameter_count(2, 3), 72);
        let (lstm, store) = build(2, 3, 1, 0);
        assert_eq!(lstm.parameter_count(), 72);
        assert_eq!(store.count(), 72);
        let (lstm, store) = build(50, 8, 3, 0);
        assert_eq!(store.count(), lstm.parameter_count());
        assert_eq!(lstm.parameter_count(), 4 * (50 * 8 + 64 + 8) + 2 * 4 * (8 * 8 + 64 + 8));
    }

    #[test]
    fn zero_parameters_give_zero_hidden_states() {
        let (lstm, mut store) = build(3, 4, 2, 1);
        for t in store.tensors_mut() {
            *t = Tensor::zeros(t.shape()).with_requires_grad(true);
        }
        let mut tape = Tape::new();
        let params = store.bind(&mut tape);
        let x = tape.constant(Tensor::full(&[5, 3], 0.7));
        let (all, last) = lstm.forward_sequence(&mut tape, &params, x).unwrap();
        assert_eq!(tape.value(all), &Tensor::zeros(&[5, 4]));
        assert_eq!(tape.value(last), &Tensor::zeros(&[4]));
    }

    #[test]
    fn output_shapes() {
        let (lstm, store) = build(50, 640, 3, 2);
        let mut tape = Tape::<f64>::new();
        let params = store.bind_frozen(&mut tape);
        let x = tape.constant(Tensor::full(&[38, 50], 0.01));
        let (all, last) = lstm.forward_sequence(&mut tape, &params, x).unwrap();
        assert_eq!(tape.value(all).shape(), &[38, 640]);
        assert_eq!(tape.value(last).shape(), &[640]);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let (lstm, store) = build(3, 4, 1, 3);
        let mut tape = Tape::<f64>::new();
        let params = store.bind(&mut tape);
        assert!(lstm.forward(&mut tape, &params, &[]).is_err());
    }

    #[test]
    fn full_gradient_check() {
        let (lstm, store) = build(3, 5, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let mut init = Init { rng: &mut rng };
        let x: Tensor<f64> = init.glorot(&[4, 3], 1, 1);
        let n = store.len();
        let report = finite_difference_check_many(
            |tape, vars| {
                let steps: Vec<Var> = (0..4)
                    .map(|t| tape.constant(Tensor::matrix(1, 3, x.row(t).to_vec()).unwrap()))
                    .collect();
                let out = lstm.forward(tape, &vars[..n], &steps)?;
                let all = tape.concat_rows(&out.hidden)?;
                let sq = tape.mul(all, all)?;
                let s = tape.sum(sq);
                let l = tape.sum(out.last);
                let l = tape.reshape(l, vec![1, 1])?;
                let s = tape.reshape(s, vec![1, 1])?;
                let tot = tape.add(s, l)?;
                Ok(tape.sum(tot))
            },
            store.tensors(),
            1e-5,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }
}
