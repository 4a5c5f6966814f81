//! Text-to-score plumbing and checkpoint files.
//!
//! A checkpoint is `HOLORANK`, a little-endian `u32` format version, a
//! `u64` header length, a JSON header, then every tensor as raw
//! little-endian `f64` values in header order (embedding table first).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{overlap_features, IdfTable, OverlapNormalization, QaDataset, Stopwords, Vocabulary};
use crate::error::{Error, Result};
use crate::layers::EmbeddingTable;
use crate::metrics::RankedRun;
use crate::model::{build_model, EncodedPair, Model, ModelConfig};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorRecord};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HOLORANK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to turn raw token lists into model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub vocabulary: Vocabulary,
    pub idf: IdfTable,
    pub stopwords: Stopwords,
    pub normalization: OverlapNormalization,
}

impl Featurizer {
    /// Vocabulary over all given datasets; idf over the training answers
    /// and questions (the first dataset).
    pub fn fit(train: &QaDataset, others: &[&QaDataset], stopwords: Stopwords) -> Self {
        let mut all = vec![train];
        all.extend_from_slice(others);
        let docs = train
            .instances()
            .iter()
            .flat_map(|i| [i.question.as_slice(), i.answer.as_slice()]);
        Self {
            vocabulary: Vocabulary::build(&all),
            idf: crate::data::compute_idf(docs),
            stopwords,
            normalization: OverlapNormalization::Normalized,
        }
    }

    pub fn encode<S: AsRef<str>>(&self, config: &ModelConfig, question: &[S], answer: &[S]) -> EncodedPair {
        EncodedPair {
            question: self.vocabulary.encode_and_pad(question, config.max_len_q),
            answer: self.vocabulary.encode_and_pad(answer, config.max_len_a),
            features: config
                .use_overlap_feats
                .then(|| overlap_features(question, answer, &self.idf, &self.stopwords, self.normalization)),
        }
    }

    pub fn encode_dataset(&self, config: &ModelConfig, dataset: &QaDataset) -> Vec<EncodedPair> {
        dataset
            .instances()
            .iter()
            .map(|i| self.encode(config, &i.question, &i.answer))
            .collect()
    }
}

/// A model together with its featurizer.
#[derive(Debug, Clone)]
pub struct Ranker<T> {
    pub model: Model<T>,
    pub featurizer: Featurizer,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    featurizer: Featurizer,
    embedding_shape: Vec<usize>,
    params: Vec<(String, Vec<usize>)>,
    metadata: serde_json::Value,
}

fn write_f64s(out: &mut Vec<u8>, data: &[f64]) {
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl<T: Scalar> Ranker<T> {
    /// Scores `pairs` in chunks of `batch_size`; with `workers > 1`
    /// chunks run on a thread pool and are reassembled in input order.
    pub fn score_encoded(&self, pairs: &[EncodedPair], batch_size: usize, workers: usize) -> Result<Vec<T>> {
        score_chunks(&self.model, pairs, batch_size, workers)
    }

    pub fn score_dataset(&self, dataset: &QaDataset, batch_size: usize, workers: usize) -> Result<Vec<T>> {
        let pairs = self.featurizer.encode_dataset(&self.model.config, dataset);
        self.score_encoded(&pairs, batch_size, workers)
    }

    pub fn rank_dataset(&self, dataset: &QaDataset, tag: &str, batch_size: usize, workers: usize) -> Result<RankedRun> {
        let scores = self.score_dataset(dataset, batch_size, workers)?;
        run_from_scores(dataset, &scores, tag)
    }

    pub fn to_bytes(&self, metadata: serde_json::Value) -> Result<Vec<u8>> {
        let header = Header {
            config: self.model.config.clone(),
            featurizer: self.featurizer.clone(),
            embedding_shape: self.model.embeddings.matrix().shape().to_vec(),
            params: self
                .model
                .params
                .iter()
                .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
                .collect(),
            metadata,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        write_f64s(&mut out, &self.model.embeddings.matrix().to_f64_vec());
        for t in self.model.params.tensors() {
            write_f64s(&mut out, &t.to_f64_vec());
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>, metadata: serde_json::Value) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes(metadata)?;
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    /// Returns the ranker and the metadata stored with it.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, serde_json::Value)> {
        let bad = |m: &str| Error::Data(format!("invalid checkpoint: {m}"));
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(bad("truncated"));
            }
            let (head, rest) = cur.split_at(n);
            cur = rest;
            Ok(head)
        };
        if take(8)? != CHECKPOINT_MAGIC {
            return Err(bad("bad magic bytes"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let header: Header = serde_json::from_slice(take(len)?)?;
        let mut tensor = |shape: &[usize]| -> Result<Tensor<T>> {
            let n: usize = shape.iter().product();
            let raw = take(n * 8)?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            Tensor::from_f64(shape.to_vec(), &data)
        };
        let embeddings = EmbeddingTable::new(tensor(&header.embedding_shape)?)?;
        let records = header
            .params
            .iter()
            .map(|(name, shape)| Ok((name.clone(), TensorRecord::from(&tensor(shape)?))))
            .collect::<Result<Vec<_>>>()?;
        if !cur.is_empty() {
            return Err(bad("trailing bytes"));
        }
        let mut model = build_model(header.config, embeddings)?;
        model.params.load_records(&records)?;
        Ok((
            Self {
                model,
                featurizer: header.featurizer,
            },
            header.metadata,
        ))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, serde_json::Value)> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) fn score_chunks<T: Scalar>(
    model: &Model<T>,
    pairs: &[EncodedPair],
    batch_size: usize,
    workers: usize,
) -> Result<Vec<T>> {
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let chunks: Vec<&[EncodedPair]> = pairs.chunks(batch_size.max(1)).collect();
    let parts: Vec<Result<Vec<T>>> = if workers <= 1 {
        chunks.iter().map(|c| model.score_pairs(c)).collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
        pool.install(|| chunks.par_iter().map(|c| model.score_pairs(c)).collect())
    };
    let mut out = Vec::with_capacity(pairs.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Pairs each instance with its score and groups by query.
pub fn run_from_scores<T: Scalar>(dataset: &QaDataset, scores: &[T], tag: &str) -> Result<RankedRun> {
    if scores.len() != dataset.len() {
        return Err(Error::dim("run_from_scores", &[dataset.len()], &[scores.len()]));
    }
    RankedRun::from_scores(
        tag,
        dataset
            .instances()
            .iter()
            .zip(scores)
            .map(|(i, s)| (i.query_id.clone(), i.candidate_id.clone(), s.as_f64(), i.label)),
    )
}
