use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Frozen `|V| × n` word-vector table. Row 0 is the padding vector and is
/// always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    matrix: Tensor<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    /// Wraps a `[|V| × n]` matrix, zeroing row 0.
    pub fn new(mut matrix: Tensor<T>) -> Result<Self> {
        let (rows, n) = matrix.dims2()?;
        if rows == 0 {
            return Err(Error::Contract("embedding table needs at least the padding row".into()));
        }
        for v in &mut matrix.data_mut()[..n] {
            *v = T::zero();
        }
        Ok(Self {
            matrix: matrix.with_requires_grad(false),
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[1]
    }

    /// Word vectors are never updated by training.
    pub fn trainable(&self) -> bool {
        false
    }

    pub fn matrix(&self) -> &Tensor<T> {
        &self.matrix
    }

    pub fn row(&self, id: usize) -> &[T] {
        self.matrix.row(id)
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingTable<U> {
        EmbeddingTable {
            matrix: self.matrix.cast(),
        }
    }

    /// Looks up a token sequence, giving an `[L × n]` matrix.
    pub fn embed(&self, ids: &[u32]) -> Result<Tensor<T>> {
        let n = self.dim();
        let mut data = Vec::with_capacity(ids.len() * n);
        for (position, &id) in ids.iter().enumerate() {
            let id = id as usize;
            if id >= self.vocab_size() {
                return Err(Error::Vocabulary {
                    position,
                    id,
                    size: self.vocab_size(),
                });
            }
            data.extend_from_slice(self.row(id));
        }
        Tensor::matrix(ids.len(), n, data)
    }

    /// Rows for timestep `t` of every sequence in a batch, `[B × n]`.
    pub fn embed_step(&self, batch: &[Vec<u32>], t: usize) -> Result<Tensor<T>> {
        let column: Vec<u32> = batch.iter().map(|seq| seq.get(t).copied().unwrap_or(0)).collect();
        self.embed(&column)
    }
}
