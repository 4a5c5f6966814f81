use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::vocab::{Vocabulary, PAD};
use crate::error::{Error, Result};
use crate::layers::EmbeddingTable;
use crate::tensor::Tensor;

/// Half-width of the uniform range used for words missing from the file.
pub const OOV_RANGE: f64 = 0.25;

/// A table of `vocab.len() × dim` entries drawn uniformly in
/// `[−0.25, 0.25]`, with a zero padding row.
pub fn random_embeddings(vocab_size: usize, dim: usize, seed: u64) -> Result<EmbeddingTable<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..vocab_size * dim)
        .map(|_| rng.random_range(-OOV_RANGE..=OOV_RANGE))
        .collect();
    EmbeddingTable::new(Tensor::matrix(vocab_size, dim, data)?)
}

/// Reads word2vec-style text and keeps the rows of `vocab`'s tokens.
///
/// Every row is first filled from the seeded uniform draw, then rows found
/// in the file are overwritten, so an out-of-vocabulary row depends only on
/// `(seed, id)`.
pub fn load_pretrained_embeddings(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    expected_dim: Option<usize>,
    seed: u64,
) -> Result<EmbeddingTable<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, &path.display().to_string(), vocab, expected_dim, seed)
}

pub fn parse_embeddings(
    text: &str,
    source: &str,
    vocab: &Vocabulary,
    expected_dim: Option<usize>,
    seed: u64,
) -> Result<EmbeddingTable<f64>> {
    let mut dim: Option<usize> = None;
    let mut found: HashMap<u32, Vec<f64>> = HashMap::new();
    for (no, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: source.to_string(),
            line: no + 1,
            message,
        };
        if no == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| err(format!("'{f}' is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None if values.is_empty() => return Err(err("token without a vector".into())),
            None => dim = Some(values.len()),
            Some(n) if n != values.len() => {
                return Err(err(format!("expected {n} values, got {}", values.len())));
            }
            _ => {}
        }
        if let Some(id) = vocab.get(fields[0]) {
            found.entry(id).or_insert(values);
        }
    }
    let n = match (dim, expected_dim) {
        (None, _) => {
            return Err(Error::Parse {
                path: source.to_string(),
                line: 0,
                message: "no embedding vectors found".into(),
            })
        }
        (Some(n), Some(want)) if n != want => {
            return Err(Error::Config(format!(
                "embedding file {source} has dimension {n}, configuration expects {want}"
            )))
        }
        (Some(n), _) => n,
    };
    let table = random_embeddings(vocab.len(), n, seed)?;
    let mut matrix = table.matrix().clone();
    for (id, values) in found {
        if id != PAD {
            let start = id as usize * n;
            matrix.data_mut()[start..start + n].copy_from_slice(&values);
        }
    }
    EmbeddingTable::new(matrix)
}
