//! Ranking metrics and trec_eval-style run files.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub candidate_id: String,
    pub score: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedQuery {
    pub query_id: String,
    pub entries: Vec<RankedEntry>,
}

/// Per-query rankings, each sorted by score descending then candidate id
/// ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRun {
    pub tag: String,
    pub queries: Vec<RankedQuery>,
}

fn rank_order(a: &RankedEntry, b: &RankedEntry) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.candidate_id.cmp(&b.candidate_id))
}

impl RankedRun {
    /// Groups `(query, candidate, score, label)` rows, keeping queries in
    /// first-seen order.
    pub fn from_scores<I, Q, C>(tag: impl Into<String>, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Q, C, f64, u8)>,
        Q: Into<String>,
        C: Into<String>,
    {
        let mut order: HashMap<String, usize> = HashMap::new();
        let mut queries: Vec<RankedQuery> = Vec::new();
        for (q, c, score, label) in rows {
            let q = q.into();
            let slot = *order.entry(q.clone()).or_insert_with(|| {
                queries.push(RankedQuery {
                    query_id: q.clone(),
                    entries: Vec::new(),
                });
                queries.len() - 1
            });
            if score.is_nan() {
                return Err(Error::Numeric(format!("NaN score in query '{q}'")));
            }
            queries[slot].entries.push(RankedEntry {
                candidate_id: c.into(),
                score,
                label,
            });
        }
        for q in &mut queries {
            q.entries.sort_by(rank_order);
            if has_duplicates(&q.entries) {
                return Err(Error::Data(format!("duplicate candidate in query '{}'", q.query_id)));
            }
        }
        Ok(Self {
            tag: tag.into(),
            queries,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Replaces every label with the value found in `qrels` (0 if absent).
    pub fn with_qrels(mut self, qrels: &Qrels) -> Self {
        for q in &mut self.queries {
            for e in &mut q.entries {
                e.label = qrels.label(&q.query_id, &e.candidate_id);
            }
        }
        self
    }
}

fn has_duplicates(entries: &[RankedEntry]) -> bool {
    let mut ids: Vec<&str> = entries.iter().map(|e| e.candidate_id.as_str()).collect();
    ids.sort_unstable();
    ids.windows(2).any(|w| w[0] == w[1])
}

fn average_precision(labels: impl Iterator<Item = u8>) -> Option<f64> {
    let (mut hits, mut total) = (0usize, 0.0);
    for (rank, label) in labels.enumerate() {
        if label > 0 {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    (hits > 0).then(|| total / hits as f64)
}

fn reciprocal_rank(labels: impl Iterator<Item = u8>) -> Option<f64> {
    labels
        .enumerate()
        .find(|&(_, l)| l > 0)
        .map(|(rank, _)| 1.0 / (rank + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub map: f64,
    pub mrr: f64,
    pub p_at_1: f64,
    /// Queries that entered the means.
    pub queries: usize,
    /// Queries left out because no candidate is positive.
    pub excluded: usize,
}

fn per_query(run: &RankedRun, f: impl Fn(&[RankedEntry]) -> Option<f64>) -> Result<(f64, usize, usize)> {
    if run.is_empty() {
        return Err(Error::Data("cannot evaluate an empty run".into()));
    }
    let values: Vec<f64> = run.queries.iter().filter_map(|q| f(&q.entries)).collect();
    let excluded = run.queries.len() - values.len();
    if values.is_empty() {
        return Err(Error::Data("no query in the run has a positive candidate".into()));
    }
    Ok((values.iter().sum::<f64>() / values.len() as f64, values.len(), excluded))
}

fn labels(entries: &[RankedEntry]) -> impl Iterator<Item = u8> + '_ {
    entries.iter().map(|e| e.label)
}

pub fn mean_average_precision(run: &RankedRun) -> Result<f64> {
    per_query(run, |e| average_precision(labels(e))).map(|r| r.0)
}

pub fn mean_reciprocal_rank(run: &RankedRun) -> Result<f64> {
    per_query(run, |e| reciprocal_rank(labels(e))).map(|r| r.0)
}

pub fn precision_at_1(run: &RankedRun) -> Result<f64> {
    per_query(run, |e| {
        e.iter()
            .any(|x| x.label > 0)
            .then(|| if e[0].label > 0 { 1.0 } else { 0.0 })
    })
    .map(|r| r.0)
}

pub fn evaluate(run: &RankedRun) -> Result<Metrics> {
    let (map, queries, excluded) = per_query(run, |e| average_precision(labels(e)))?;
    Ok(Metrics {
        map,
        mrr: mean_reciprocal_rank(run)?,
        p_at_1: precision_at_1(run)?,
        queries,
        excluded,
    })
}

/// Expected metrics of a uniformly random ordering, estimated by shuffling
/// each label group `trials` times.
pub fn random_baseline(groups: &[Vec<u8>], trials: usize, seed: u64) -> Result<Metrics> {
    let usable: Vec<&Vec<u8>> = groups.iter().filter(|g| g.iter().any(|&l| l > 0)).collect();
    if usable.is_empty() || trials == 0 {
        return Err(Error::Data(
            "random baseline needs a group with a positive and trials > 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut map, mut mrr, mut p1) = (0.0, 0.0, 0.0);
    let mut buf = Vec::new();
    for _ in 0..trials {
        for g in &usable {
            buf.clear();
            buf.extend_from_slice(g);
            buf.shuffle(&mut rng);
            map += average_precision(buf.iter().copied()).unwrap_or(0.0);
            mrr += reciprocal_rank(buf.iter().copied()).unwrap_or(0.0);
            p1 += if buf[0] > 0 { 1.0 } else { 0.0 };
        }
    }
    let n = (trials * usable.len()) as f64;
    Ok(Metrics {
        map: map / n,
        mrr: mrr / n,
        p_at_1: p1 / n,
        queries: usable.len(),
        excluded: groups.len() - usable.len(),
    })
}

/// One line per candidate: `query_id Q0 candidate_id rank score tag`.
pub fn format_run(run: &RankedRun) -> String {
    let mut out = String::new();
    for q in &run.queries {
        for (i, e) in q.entries.iter().enumerate() {
            out.push_str(&format!(
                "{} Q0 {} {} {:.6} {}\n",
                q.query_id,
                e.candidate_id,
                i + 1,
                e.score,
                run.tag
            ));
        }
    }
    out
}

pub fn write_run_file(run: &RankedRun, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_run(run)).map_err(|e| Error::io(path, e))
}

/// Parses run text back; labels are 0 until joined with qrels.
pub fn parse_run(text: &str, source: &str) -> Result<RankedRun> {
    let mut rows = Vec::new();
    let mut tag: Option<String> = None;
    for (no, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        let err = |message: &str| Error::Parse {
            path: source.to_string(),
            line: no + 1,
            message: message.to_string(),
        };
        if f.len() != 6 || f[1] != "Q0" {
            return Err(err("expected `query_id Q0 candidate_id rank score tag`"));
        }
        f[3].parse::<usize>().map_err(|_| err("rank is not an integer"))?;
        let score = f[4].parse::<f64>().map_err(|_| err("score is not a number"))?;
        tag.get_or_insert_with(|| f[5].to_string());
        rows.push((f[0].to_string(), f[2].to_string(), score, 0u8));
    }
    RankedRun::from_scores(tag.unwrap_or_default(), rows)
}

pub fn read_run_file(path: impl AsRef<Path>) -> Result<RankedRun> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run(&text, &path.display().to_string())
}

/// Relevance judgements in `query_id 0 candidate_id label` form.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels(HashMap<(String, String), u8>);

impl Qrels {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (no, line) in text.lines().enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.is_empty() {
                continue;
            }
            let label = (f.len() == 4)
                .then(|| f[3].parse::<u8>().ok())
                .flatten()
                .ok_or_else(|| Error::Parse {
                    path: source.to_string(),
                    line: no + 1,
                    message: "expected `query_id 0 candidate_id label`".into(),
                })?;
            map.insert((f[0].to_string(), f[2].to_string()), label);
        }
        Ok(Self(map))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn label(&self, query_id: &str, candidate_id: &str) -> u8 {
        self.0
            .get(&(query_id.to_string(), candidate_id.to_string()))
            .copied()
            .unwrap_or(0)
    }

    /// Qrels text for a run's labels.
    pub fn format(run: &RankedRun) -> String {
        let mut out = String::new();
        for q in &run.queries {
            for e in &q.entries {
                out.push_str(&format!("{} 0 {} {}\n", q.query_id, e.candidate_id, e.label));
            }
        }
        out
    }
}
