//! Okapi BM25 over an in-memory inverted index, and BM25-pooled negative
//! sampling.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    doc_ids: Vec<String>,
    lookup: HashMap<String, usize>,
    lengths: Vec<usize>,
    avgdl: f64,
    // token -> (doc, tf), docs ascending
    postings: BTreeMap<String, Vec<(usize, usize)>>,
}

impl InvertedIndex {
    pub fn build<I, D, S>(documents: I) -> Result<Self>
    where
        I: IntoIterator<Item = (D, Vec<S>)>,
        D: Into<String>,
        S: AsRef<str>,
    {
        let mut idx = Self {
            doc_ids: Vec::new(),
            lookup: HashMap::new(),
            lengths: Vec::new(),
            avgdl: 0.0,
            postings: BTreeMap::new(),
        };
        for (id, tokens) in documents {
            let id = id.into();
            let doc = idx.doc_ids.len();
            if idx.lookup.insert(id.clone(), doc).is_some() {
                return Err(Error::Data(format!("duplicate document id '{id}'")));
            }
            idx.doc_ids.push(id);
            idx.lengths.push(tokens.len());
            let mut tf: BTreeMap<&str, usize> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.as_ref()).or_default() += 1;
            }
            for (tok, n) in tf {
                idx.postings.entry(tok.to_owned()).or_default().push((doc, n));
            }
        }
        if idx.doc_ids.is_empty() {
            return Err(Error::Data("cannot index an empty corpus".into()));
        }
        idx.avgdl = idx.lengths.iter().sum::<usize>() as f64 / idx.doc_ids.len() as f64;
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<usize> {
        self.lookup.get(doc_id).map(|&d| self.lengths[d])
    }

    pub fn document_frequency(&self, token: &str) -> usize {
        self.postings.get(token).map_or(0, Vec::len)
    }

    pub fn term_frequency(&self, token: &str, doc_id: &str) -> usize {
        let Some(&doc) = self.lookup.get(doc_id) else { return 0 };
        self.postings
            .get(token)
            .and_then(|p| p.binary_search_by_key(&doc, |&(d, _)| d).ok().map(|i| p[i].1))
            .unwrap_or(0)
    }

    /// `ln(1 + (N − df + 0.5)/(df + 0.5))`, never negative.
    pub fn idf(&self, token: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.document_frequency(token) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, tf: usize, len: usize, params: Bm25Params) -> f64 {
        let tf = tf as f64;
        let norm = 1.0 - params.b + params.b * len as f64 / self.avgdl.max(f64::MIN_POSITIVE);
        tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
    }

    pub fn score<S: AsRef<str>>(&self, query: &[S], doc_id: &str, params: Bm25Params) -> Result<f64> {
        let &doc = self
            .lookup
            .get(doc_id)
            .ok_or_else(|| Error::Data(format!("unknown document id '{doc_id}'")))?;
        Ok(query
            .iter()
            .map(|t| {
                let tf = self.term_frequency(t.as_ref(), doc_id);
                if tf == 0 {
                    0.0
                } else {
                    self.idf(t.as_ref()) * self.term_weight(tf, self.lengths[doc], params)
                }
            })
            .sum())
    }

    /// Every document with a positive score, ordered by score descending
    /// then id ascending.
    pub fn search<S: AsRef<str>>(&self, query: &[S], params: Bm25Params) -> Vec<(String, f64)> {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for t in query {
            let Some(post) = self.postings.get(t.as_ref()) else {
                continue;
            };
            let idf = self.idf(t.as_ref());
            for &(doc, tf) in post {
                *acc.entry(doc).or_default() += idf * self.term_weight(tf, self.lengths[doc], params);
            }
        }
        let mut hits: Vec<(String, f64)> = acc
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(d, s)| (self.doc_ids[d].clone(), s))
            .collect();
        hits.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        hits
    }
}

/// Free-standing form of [`InvertedIndex::score`].
pub fn bm25_score<S: AsRef<str>>(query: &[S], doc_id: &str, index: &InvertedIndex, params: Bm25Params) -> Result<f64> {
    index.score(query, doc_id, params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativeSampling {
    pub pool_size: usize,
    pub k: usize,
    pub seed: u64,
    pub params: Bm25Params,
}

impl Default for NegativeSampling {
    fn default() -> Self {
        Self {
            pool_size: 1000,
            k: 4,
            seed: 0,
            params: Bm25Params::default(),
        }
    }
}

/// Draws `min(k, N − 1)` distinct non-gold ids uniformly from the top
/// `pool_size` BM25 hits for `question`.
pub fn sample_negatives<S: AsRef<str>>(
    question: &[S],
    gold_id: &str,
    index: &InvertedIndex,
    cfg: NegativeSampling,
) -> Result<Vec<String>> {
    sample_negatives_filtered(question, gold_id, index, cfg, |_| true)
}

/// [`sample_negatives`] restricted to ids accepted by `eligible`.
///
/// When the pool holds fewer than `k` eligible ids, all of them are taken
/// and the rest are drawn uniformly from the remaining eligible corpus.
pub fn sample_negatives_filtered<S: AsRef<str>>(
    question: &[S],
    gold_id: &str,
    index: &InvertedIndex,
    cfg: NegativeSampling,
    eligible: impl Fn(&str) -> bool,
) -> Result<Vec<String>> {
    let ok = |id: &str| id != gold_id && eligible(id);
    let available = index.doc_ids.iter().filter(|id| ok(id)).count();
    if available == 0 {
        return Err(Error::Data(format!(
            "corpus of {} documents has no candidate negative for '{gold_id}'",
            index.len()
        )));
    }
    let k = cfg.k.min(available);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pool: Vec<String> = index
        .search(question, cfg.params)
        .into_iter()
        .map(|(id, _)| id)
        .filter(|id| ok(id))
        .take(cfg.pool_size)
        .collect();
    if pool.len() >= k {
        return Ok(sample(&mut rng, pool.len(), k)
            .into_iter()
            .map(|i| pool[i].clone())
            .collect());
    }
    let rest: Vec<&String> = index.doc_ids.iter().filter(|id| ok(id) && !pool.contains(id)).collect();
    let mut out = pool.clone();
    out.extend(
        sample(&mut rng, rest.len(), k - pool.len())
            .into_iter()
            .map(|i| rest[i].clone()),
    );
    Ok(out)
}
