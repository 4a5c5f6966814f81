use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorRecord};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor.with_requires_grad(true));
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Elements held by the parameters whose name starts with `prefix`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, t)| t.len())
            .sum()
    }

    /// Places every parameter on the tape; the returned vars are indexed by
    /// [`ParamId`].
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Places every parameter on the tape as a constant (inference).
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.constant(t.clone())).collect()
    }

    pub fn to_records(&self) -> Vec<(String, TensorRecord)> {
        self.iter()
            .map(|(n, t)| (n.to_string(), TensorRecord::from(t)))
            .collect()
    }

    /// Replaces values from records, matching by name and shape.
    pub fn load_records(&mut self, records: &[(String, TensorRecord)]) -> Result<()> {
        if records.len() != self.len() {
            return Err(Error::Data(format!(
                "checkpoint holds {} parameters, model expects {}",
                records.len(),
                self.len()
            )));
        }
        for (name, rec) in records {
            let idx = self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Data(format!("unexpected parameter '{name}' in checkpoint")))?;
            if rec.shape != self.tensors[idx].shape() {
                return Err(Error::dim("load_records", self.tensors[idx].shape(), &rec.shape));
            }
            self.tensors[idx] = rec.to_tensor::<T>()?.with_requires_grad(true);
        }
        Ok(())
    }
}

/// Seeded parameter initializers.
pub struct Init<'a> {
    pub rng: &'a mut ChaCha8Rng,
}

impl Init<'_> {
    /// Uniform in `[-r, r]` with `r = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot<T: Scalar>(&mut self, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor<T> {
        let r = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::of(self.rng.random_range(-r..=r))).collect();
        Tensor::new(shape.to_vec(), data).expect("shape product matches")
    }

    pub fn zeros<T: Scalar>(&mut self, shape: &[usize]) -> Tensor<T> {
        Tensor::zeros(shape)
    }
}
