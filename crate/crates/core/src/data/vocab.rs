use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::dataset::QaDataset;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token ↔ id mapping. Ids 0 and 1 are reserved for padding and unknowns;
/// the rest follow descending frequency, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    pub fn from_token_lists<'a, I, S>(lists: I) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut freq: HashMap<&str, usize> = HashMap::new();
        for list in lists {
            for tok in list {
                *freq.entry(tok.as_ref()).or_default() += 1;
            }
        }
        freq.remove(PAD_TOKEN);
        freq.remove(UNK_TOKEN);
        let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens = [PAD_TOKEN, UNK_TOKEN]
            .into_iter()
            .chain(ranked.into_iter().map(|(t, _)| t))
            .map(str::to_owned)
            .collect::<Vec<_>>();
        Self::from(tokens)
    }

    /// Builds over the questions and answers of every dataset.
    pub fn build(datasets: &[&QaDataset]) -> Self {
        let lists = datasets.iter().flat_map(|d| {
            d.instances()
                .iter()
                .flat_map(|i| [i.question.as_slice(), i.answer.as_slice()])
        });
        Self::from_token_lists(lists)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// First `max_len` ids, tail-padded with [`PAD`].
    pub fn encode_and_pad<S: AsRef<str>>(&self, tokens: &[S], max_len: usize) -> Vec<u32> {
        let mut out: Vec<u32> = tokens.iter().take(max_len).map(|t| self.id(t.as_ref())).collect();
        out.resize(max_len, PAD);
        out
    }

    /// Inverse of encoding with padding dropped.
    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| id != PAD)
            .map(|&id| self.token(id).unwrap_or(UNK_TOKEN).to_owned())
            .collect()
    }
}
