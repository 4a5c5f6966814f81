//! A separable QA ranking task with a known answer.
//!
//! Each question holds three content words among filler stopwords. Its
//! positive answer repeats two of them; its negatives are other answers
//! drawn from the top BM25 hits for the question after removing every
//! answer that shares a content word with it. BM25 can only match the
//! negatives through stopwords, so they look lexically close without being
//! relevant.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bm25::{sample_negatives_filtered, InvertedIndex, NegativeSampling};
use crate::data::dataset::{QaDataset, QaInstance, Split};
use crate::error::Result;

const QUESTION_FILLER: &[&str] = &["what", "is", "the", "of", "which", "does", "a", "how"];
const ANSWER_FILLER: &[&str] = &["the", "is", "a", "of", "it", "in", "to", "and", "was", "for"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub train_questions: usize,
    pub dev_questions: usize,
    pub test_questions: usize,
    pub negatives: usize,
    /// Number of distinct content words.
    pub content_words: usize,
    /// Extra answers per question that are never positive.
    pub distractors_per_question: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            train_questions: 500,
            dev_questions: 100,
            test_questions: 100,
            negatives: 4,
            content_words: 150,
            distractors_per_question: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSplits {
    pub train: QaDataset,
    pub dev: QaDataset,
    pub test: QaDataset,
}

pub fn content_word(i: usize) -> String {
    format!("w{i:03}")
}

fn is_content(token: &str) -> bool {
    token.starts_with('w') && token[1..].chars().all(|c| c.is_ascii_digit()) && token.len() > 1
}

fn filler(rng: &mut ChaCha8Rng, words: &[&str], n: usize) -> Vec<String> {
    (0..n)
        .map(|_| words.choose(rng).expect("non-empty").to_string())
        .collect()
}

fn answer_with(rng: &mut ChaCha8Rng, keep: &[String], vocab: usize, avoid: &HashSet<String>) -> Vec<String> {
    let mut toks: Vec<String> = keep.to_vec();
    while toks.len() < keep.len() + 2 {
        let w = content_word(rng.random_range(0..vocab));
        if !avoid.contains(&w) && !toks.contains(&w) {
            toks.push(w);
        }
    }
    let n_fill = rng.random_range(3..=5);
    toks.extend(filler(rng, ANSWER_FILLER, n_fill));
    toks.shuffle(rng);
    toks
}

fn build_split(
    rng: &mut ChaCha8Rng,
    cfg: &SyntheticConfig,
    questions: usize,
    tag: &str,
    split: Split,
) -> Result<QaDataset> {
    let v = cfg.content_words;
    let mut qs: Vec<(Vec<String>, HashSet<String>)> = Vec::with_capacity(questions);
    let mut answers: Vec<(String, Vec<String>)> = Vec::new();
    for qi in 0..questions {
        let mut content: Vec<String> = Vec::new();
        while content.len() < 3 {
            let w = content_word(rng.random_range(0..v));
            if !content.contains(&w) {
                content.push(w);
            }
        }
        let set: HashSet<String> = content.iter().cloned().collect();
        let mut keep = content.clone();
        keep.shuffle(rng);
        keep.truncate(2);
        answers.push((format!("{tag}-a{qi}"), answer_with(rng, &keep, v, &set)));
        let n_fill = rng.random_range(2..=4);
        let mut q = filler(rng, QUESTION_FILLER, n_fill);
        q.extend(content);
        q.shuffle(rng);
        qs.push((q, set));
    }
    for di in 0..questions * cfg.distractors_per_question {
        answers.push((format!("{tag}-d{di}"), answer_with(rng, &[], v, &HashSet::new())));
    }
    let index = InvertedIndex::build(answers.iter().map(|(id, t)| (id.clone(), t.clone())))?;
    let by_id: std::collections::HashMap<&str, &Vec<String>> = answers.iter().map(|(id, t)| (id.as_str(), t)).collect();

    let mut instances = Vec::new();
    for (qi, (q, content)) in qs.iter().enumerate() {
        let qid = format!("{tag}-q{qi}");
        let gold = format!("{tag}-a{qi}");
        let sampling = NegativeSampling {
            k: cfg.negatives,
            seed: rng.random(),
            ..Default::default()
        };
        let negs = sample_negatives_filtered(q, &gold, &index, sampling, |id| {
            by_id[id].iter().all(|t| !is_content(t) || !content.contains(t))
        })?;
        let mut group: Vec<QaInstance> = std::iter::once((gold.clone(), 1u8))
            .chain(negs.into_iter().map(|n| (n, 0u8)))
            .map(|(cid, label)| QaInstance {
                query_id: qid.clone(),
                answer: by_id[cid.as_str()].clone(),
                candidate_id: cid,
                label,
                question: q.clone(),
            })
            .collect();
        group.shuffle(rng);
        instances.extend(group);
    }
    Ok(QaDataset::from_instances(instances)?.with_split(split))
}

pub fn synthetic_splits(cfg: SyntheticConfig) -> Result<SyntheticSplits> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(SyntheticSplits {
        train: build_split(&mut rng, &cfg, cfg.train_questions, "train", Split::Train)?,
        dev: build_split(&mut rng, &cfg, cfg.dev_questions, "dev", Split::Dev)?,
        test: build_split(&mut rng, &cfg, cfg.test_questions, "test", Split::Test)?,
    })
}
