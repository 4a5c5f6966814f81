//! Python module `holorank`.

use std::path::PathBuf;

use holorank::bm25::{sample_negatives, Bm25Params, InvertedIndex, NegativeSampling};
use holorank::data::{random_embeddings, tokenize as tokenize_text, DatasetFormat, QaDataset, Split, Stopwords};
use holorank::holo::{self, CompositionBackend};
use holorank::metrics::{self, Metrics, RankedRun};
use holorank::model::{build_model, Architecture, ModelConfig};
use holorank::pipeline::{Featurizer, Ranker};
use holorank::trainer::{self, TrainConfig};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: holorank::Error) -> PyErr {
    use holorank::Error as E;
    match e {
        E::Io { .. } => PyIOError::new_err(e.to_string()),
        E::Numeric(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn backend(name: &str) -> PyResult<CompositionBackend> {
    name.parse().map_err(py_err)
}

/// `[q ⋆ a]_k = Σ_i q_i a_{(k+i) mod d}`.
#[pyfunction]
#[pyo3(signature = (q, a, backend = "fft"))]
fn circular_correlation(q: Vec<f64>, a: Vec<f64>, backend: &str) -> PyResult<Vec<f64>> {
    holo::circular_correlation(&q, &a, self::backend(backend)?).map_err(py_err)
}

/// `[q ∗ a]_k = Σ_i q_i a_{(k−i) mod d}`.
#[pyfunction]
#[pyo3(signature = (q, a, backend = "fft"))]
fn circular_convolution(q: Vec<f64>, a: Vec<f64>, backend: &str) -> PyResult<Vec<f64>> {
    holo::circular_convolution(&q, &a, self::backend(backend)?).map_err(py_err)
}

#[pyfunction]
fn approximate_inverse(q: Vec<f64>) -> Vec<f64> {
    holo::approximate_inverse(&q)
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    tokenize_text(text)
}

fn metrics_dict<'py>(py: Python<'py>, m: &Metrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("map", m.map)?;
    d.set_item("mrr", m.mrr)?;
    d.set_item("p_at_1", m.p_at_1)?;
    d.set_item("queries", m.queries)?;
    d.set_item("excluded", m.excluded)?;
    Ok(d)
}

/// MAP, MRR and P@1 of `(query_id, candidate_id, score, label)` rows.
#[pyfunction]
fn evaluate_scores<'py>(py: Python<'py>, rows: Vec<(String, String, f64, u8)>) -> PyResult<Bound<'py, PyDict>> {
    let run = RankedRun::from_scores("py", rows).map_err(py_err)?;
    metrics_dict(py, &metrics::evaluate(&run).map_err(py_err)?)
}

/// Expected metrics of a uniformly random ranking, by Monte Carlo.
#[pyfunction]
#[pyo3(signature = (groups, trials = 100_000, seed = 0))]
fn random_baseline<'py>(
    py: Python<'py>,
    groups: Vec<Vec<u8>>,
    trials: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    metrics_dict(py, &metrics::random_baseline(&groups, trials, seed).map_err(py_err)?)
}

/// Closed-form head sizes: `(holographic, concatenation, tensor)`.
#[pyfunction]
#[pyo3(signature = (d, hidden = 64, slices = 5))]
fn head_parameters(d: usize, hidden: usize, slices: usize) -> (usize, usize, usize) {
    use holorank::bench::{concat_head_parameters, holographic_head_parameters, ntn_head_parameters};
    (
        holographic_head_parameters(d, hidden),
        concat_head_parameters(d, hidden),
        ntn_head_parameters(d, slices),
    )
}

/// Okapi BM25 over a fixed corpus of `(id, text)` documents.
#[pyclass(name = "Bm25Index", frozen)]
struct PyBm25 {
    index: InvertedIndex,
    params: Bm25Params,
}

#[pymethods]
impl PyBm25 {
    #[new]
    #[pyo3(signature = (documents, k1 = 1.2, b = 0.75))]
    fn new(documents: Vec<(String, String)>, k1: f64, b: f64) -> PyResult<Self> {
        let index =
            InvertedIndex::build(documents.into_iter().map(|(id, text)| (id, tokenize_text(&text)))).map_err(py_err)?;
        Ok(Self {
            index,
            params: Bm25Params { k1, b },
        })
    }

    fn __len__(&self) -> usize {
        self.index.len()
    }

    fn score(&self, query: &str, doc_id: &str) -> PyResult<f64> {
        self.index
            .score(&tokenize_text(query), doc_id, self.params)
            .map_err(py_err)
    }

    /// Documents with a positive score, best first.
    fn search(&self, query: &str) -> Vec<(String, f64)> {
        self.index.search(&tokenize_text(query), self.params)
    }

    #[pyo3(signature = (query, gold_id, k = 4, pool_size = 1000, seed = 0))]
    fn sample_negatives(
        &self,
        query: &str,
        gold_id: &str,
        k: usize,
        pool_size: usize,
        seed: u64,
    ) -> PyResult<Vec<String>> {
        let cfg = NegativeSampling {
            pool_size,
            k,
            seed,
            params: self.params,
        };
        sample_negatives(&tokenize_text(query), gold_id, &self.index, cfg).map_err(py_err)
    }
}

fn load_dataset(path: &PathBuf, split: Split) -> PyResult<QaDataset> {
    Ok(QaDataset::load(path, DatasetFormat::from_path(path))
        .map_err(py_err)?
        .with_split(split))
}

/// `(epoch, loss, dev_map, dev_mrr)` per epoch.
type History = Vec<(usize, f64, f64, f64)>;

/// A trained (or freshly initialized) model with its vocabulary and
/// feature statistics.
#[pyclass(name = "Ranker", frozen)]
struct PyRanker {
    inner: Ranker<f64>,
}

#[pymethods]
impl PyRanker {
    /// Builds an untrained model from a JSON model configuration (any
    /// subset of keys; missing keys take their defaults). The vocabulary
    /// covers every given dataset.
    #[staticmethod]
    #[pyo3(signature = (train_path, config_json = "{}", other_paths = Vec::new(), seed = 0))]
    fn create(train_path: PathBuf, config_json: &str, other_paths: Vec<PathBuf>, seed: u64) -> PyResult<Self> {
        let config: ModelConfig =
            serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let train = load_dataset(&train_path, Split::Train)?;
        let others = other_paths
            .iter()
            .map(|p| load_dataset(p, Split::Dev))
            .collect::<PyResult<Vec<_>>>()?;
        let featurizer = Featurizer::fit(&train, &others.iter().collect::<Vec<_>>(), Stopwords::english());
        let emb = random_embeddings(featurizer.vocabulary.len(), config.embed_dim, seed).map_err(py_err)?;
        let model = build_model(config, emb).map_err(py_err)?;
        Ok(Self {
            inner: Ranker { model, featurizer },
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (inner, _) = Ranker::load(&path).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path, serde_json::json!({})).map_err(py_err)
    }

    #[getter]
    fn architecture(&self) -> String {
        self.inner.model.config.architecture.to_string()
    }

    #[getter]
    fn config_json(&self) -> String {
        serde_json::to_string(&self.inner.model.config).expect("plain config")
    }

    /// Parameter breakdown by component.
    fn count_parameters<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let b = self.inner.model.count_parameters();
        let d = PyDict::new(py);
        d.set_item("embedding", b.embedding)?;
        d.set_item("q_lstm", b.q_lstm)?;
        d.set_item("a_lstm", b.a_lstm)?;
        d.set_item("head", b.head)?;
        d.set_item("trainable", b.trainable())?;
        d.set_item("total", b.total)?;
        Ok(d)
    }

    /// Probability that each answer is correct for `question`.
    fn score(&self, question: &str, answers: Vec<String>) -> PyResult<Vec<f64>> {
        let q = tokenize_text(question);
        let cfg = &self.inner.model.config;
        let pairs: Vec<_> = answers
            .iter()
            .map(|a| self.inner.featurizer.encode(cfg, &q, &tokenize_text(a)))
            .collect();
        self.inner.score_encoded(&pairs, 256, 1).map_err(py_err)
    }

    /// `(id, text)` candidates sorted by score descending, ties by id.
    fn rank(&self, question: &str, candidates: Vec<(String, String)>) -> PyResult<Vec<(String, f64)>> {
        let texts: Vec<String> = candidates.iter().map(|(_, t)| t.clone()).collect();
        let scores = self.score(question, texts)?;
        let mut out: Vec<(String, f64)> = candidates.into_iter().map(|(id, _)| id).zip(scores).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(out)
    }

    /// Metrics on a labeled TSV or JSONL file.
    #[pyo3(signature = (path, workers = 1))]
    fn evaluate<'py>(&self, py: Python<'py>, path: PathBuf, workers: usize) -> PyResult<Bound<'py, PyDict>> {
        let ds = load_dataset(&path, Split::Test)?;
        let m = trainer::evaluate_dataset(&self.inner, &ds, 256, workers.max(1)).map_err(py_err)?;
        metrics_dict(py, &m)
    }

    /// Returns a trained copy holding the best dev-MAP parameters, and the
    /// per-epoch history. The training configuration is JSON with any
    /// subset of keys.
    #[pyo3(signature = (train_path, dev_path, train_config_json = "{}", out_dir = None))]
    fn fit(
        slf: &Bound<'_, Self>,
        py: Python<'_>,
        train_path: PathBuf,
        dev_path: PathBuf,
        train_config_json: &str,
        out_dir: Option<PathBuf>,
    ) -> PyResult<(PyRanker, History)> {
        let cfg: TrainConfig =
            serde_json::from_str(train_config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let train = load_dataset(&train_path, Split::Train)?;
        let dev = load_dataset(&dev_path, Split::Dev)?;
        let mut ranker = slf.get().inner.clone();
        let report = py
            .detach(|| trainer::train(&mut ranker, &train, &dev, &cfg, out_dir.as_deref()))
            .map_err(py_err)?;
        let history = report
            .history
            .iter()
            .map(|r| (r.epoch, r.loss, r.dev_map, r.dev_mrr))
            .collect();
        Ok((PyRanker { inner: ranker }, history))
    }
}

#[pymodule(name = "holorank")]
fn holorank_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(circular_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(circular_convolution, m)?)?;
    m.add_function(wrap_pyfunction!(approximate_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_scores, m)?)?;
    m.add_function(wrap_pyfunction!(random_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(head_parameters, m)?)?;
    m.add_class::<PyBm25>()?;
    m.add_class::<PyRanker>()?;
    m.add(
        "ARCHITECTURES",
        [Architecture::HdLstm, Architecture::NtnLstm, Architecture::ConcatLstm].map(|a| a.to_string()),
    )?;
    Ok(())
}
