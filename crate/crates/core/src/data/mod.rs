//! Corpus ingestion and lexical side features.

pub mod dataset;
pub mod embeddings;
pub mod features;
pub mod synthetic;
pub mod vocab;

pub use dataset::{tokenize, DatasetFormat, DatasetStats, QaDataset, QaInstance, Split};
pub use embeddings::{load_pretrained_embeddings, parse_embeddings, random_embeddings};
pub use features::{compute_idf, overlap_features, IdfTable, OverlapNormalization, Stopwords, OVERLAP_DIM};
pub use synthetic::{synthetic_splits, SyntheticConfig, SyntheticSplits};
pub use vocab::{Vocabulary, PAD, UNK};
