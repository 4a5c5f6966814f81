use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of overlap features per pair.
pub const OVERLAP_DIM: usize = 4;

/// Shipped English stopword list, version 1.
pub const ENGLISH_STOPWORDS: &[&str] = &[
    "i",
    "me",
    "my",
    "myself",
    "we",
    "our",
    "ours",
    "ourselves",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
    "he",
    "him",
    "his",
    "himself",
    "she",
    "her",
    "hers",
    "herself",
    "it",
    "its",
    "itself",
    "they",
    "them",
    "their",
    "theirs",
    "themselves",
    "what",
    "which",
    "who",
    "whom",
    "this",
    "that",
    "these",
    "those",
    "am",
    "is",
    "are",
    "was",
    "were",
    "be",
    "been",
    "being",
    "have",
    "has",
    "had",
    "having",
    "do",
    "does",
    "did",
    "doing",
    "a",
    "an",
    "the",
    "and",
    "but",
    "if",
    "or",
    "because",
    "as",
    "until",
    "while",
    "of",
    "at",
    "by",
    "for",
    "with",
    "about",
    "against",
    "between",
    "into",
    "through",
    "during",
    "before",
    "after",
    "above",
    "below",
    "to",
    "from",
    "up",
    "down",
    "in",
    "out",
    "on",
    "off",
    "over",
    "under",
    "again",
    "further",
    "then",
    "once",
    "here",
    "there",
    "when",
    "where",
    "why",
    "how",
    "all",
    "any",
    "both",
    "each",
    "few",
    "more",
    "most",
    "other",
    "some",
    "such",
    "no",
    "nor",
    "not",
    "only",
    "own",
    "same",
    "so",
    "than",
    "too",
    "very",
    "s",
    "t",
    "can",
    "will",
    "just",
    "don",
    "should",
    "now",
];

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Stopwords(BTreeSet<String>);

impl Stopwords {
    pub fn english() -> Self {
        ENGLISH_STOPWORDS.iter().copied().collect()
    }

    pub fn none() -> Self {
        Self::default()
    }

    /// One token per line; blank lines and `#` comments are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for Stopwords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(Into::into).collect())
    }
}

/// Smoothed inverse document frequencies, `ln((N+1)/(df+1)) + 1`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IdfTable {
    pub documents: usize,
    pub document_frequency: BTreeMap<String, usize>,
}

impl IdfTable {
    pub fn idf(&self, token: &str) -> f64 {
        let df = self.document_frequency.get(token).copied().unwrap_or(0);
        ((self.documents as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0
    }

    /// The weight of an unseen token, which is also the largest possible.
    pub fn max_idf(&self) -> f64 {
        (self.documents as f64 + 1.0).ln() + 1.0
    }
}

/// Counts each token once per document.
pub fn compute_idf<'a, I, S>(documents: I) -> IdfTable
where
    I: IntoIterator<Item = &'a [S]>,
    S: AsRef<str> + 'a,
{
    let mut table = IdfTable::default();
    for doc in documents {
        table.documents += 1;
        let unique: HashSet<&str> = doc.iter().map(AsRef::as_ref).collect();
        for tok in unique {
            *table.document_frequency.entry(tok.to_owned()).or_default() += 1;
        }
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapNormalization {
    /// Divide by `|q_unique| + |a_unique|`.
    #[default]
    Normalized,
    RawCount,
}

/// `[overlap, idf overlap, overlap without stopwords, idf overlap without
/// stopwords]` over unique tokens.
pub fn overlap_features<S: AsRef<str>>(
    question: &[S],
    answer: &[S],
    idf: &IdfTable,
    stopwords: &Stopwords,
    normalization: OverlapNormalization,
) -> [f64; OVERLAP_DIM] {
    let q: BTreeSet<&str> = question.iter().map(AsRef::as_ref).collect();
    let a: BTreeSet<&str> = answer.iter().map(AsRef::as_ref).collect();
    let qs: BTreeSet<&str> = q.iter().copied().filter(|t| !stopwords.contains(t)).collect();
    let as_: BTreeSet<&str> = a.iter().copied().filter(|t| !stopwords.contains(t)).collect();

    let pair = |x: &BTreeSet<&str>, y: &BTreeSet<&str>| -> (f64, f64) {
        let shared: Vec<&str> = x.intersection(y).copied().collect();
        let raw = shared.len() as f64;
        let weighted: f64 = shared.iter().map(|t| idf.idf(t)).sum();
        match normalization {
            OverlapNormalization::RawCount => (raw, weighted),
            OverlapNormalization::Normalized => {
                let denom = (x.len() + y.len()) as f64;
                if denom == 0.0 {
                    (0.0, 0.0)
                } else {
                    (raw / denom, weighted / denom)
                }
            }
        }
    };
    let (raw, weighted) = pair(&q, &a);
    let (raw_s, weighted_s) = pair(&qs, &as_);
    [raw, weighted, raw_s, weighted_s]
}
