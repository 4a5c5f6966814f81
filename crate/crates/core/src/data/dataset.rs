use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercases and splits on whitespace after replacing every
/// non-alphanumeric character with a space.
pub fn tokenize(text: &str) -> Vec<String> {
    text.chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaInstance {
    pub query_id: String,
    pub candidate_id: String,
    pub label: u8,
    pub question: Vec<String>,
    pub answer: Vec<String>,
}

impl QaInstance {
    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Tsv,
    Jsonl,
}

impl DatasetFormat {
    /// `.jsonl`/`.json` files are JSON lines, everything else is TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => DatasetFormat::Jsonl,
            _ => DatasetFormat::Tsv,
        }
    }
}

/// Column statistics mirroring the usual QA corpus summary tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub questions: usize,
    pub pairs: usize,
    pub positives: usize,
    pub percent_correct: f64,
}

/// Instances in file order, grouped by query id in first-seen order.
#[derive(Debug, Clone, PartialEq)]
pub struct QaDataset {
    pub split: Option<Split>,
    instances: Vec<QaInstance>,
    groups: Vec<(String, Vec<usize>)>,
}

#[derive(Deserialize)]
struct JsonRecord {
    query_id: String,
    candidate_id: String,
    label: serde_json::Value,
    question_text: String,
    answer_text: String,
}

fn parse_label(raw: &str, path: &str, line: usize) -> Result<u8> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::Parse {
            path: path.to_string(),
            line,
            message: format!("label must be 0 or 1, got '{other}'"),
        }),
    }
}

impl QaDataset {
    /// Groups instances, rejecting duplicate candidate ids within a query.
    pub fn from_instances(instances: Vec<QaInstance>) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::Data("dataset has no instances".into()));
        }
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        let mut seen: Vec<HashSet<String>> = Vec::new();
        for (i, inst) in instances.iter().enumerate() {
            if inst.label > 1 {
                return Err(Error::Data(format!("label {} is not binary", inst.label)));
            }
            let g = *index.entry(inst.query_id.clone()).or_insert_with(|| {
                groups.push((inst.query_id.clone(), Vec::new()));
                seen.push(HashSet::new());
                groups.len() - 1
            });
            if !seen[g].insert(inst.candidate_id.clone()) {
                return Err(Error::Data(format!(
                    "duplicate candidate '{}' in query '{}'",
                    inst.candidate_id, inst.query_id
                )));
            }
            groups[g].1.push(i);
        }
        Ok(Self {
            split: None,
            instances,
            groups,
        })
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = Some(split);
        self
    }

    pub fn load(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        Self::parse(&text, format, &name)
    }

    /// Parses dataset text; `source` names the origin in error messages.
    pub fn parse(text: &str, format: DatasetFormat, source: &str) -> Result<Self> {
        let mut instances = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line_no = no + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: source.to_string(),
                line: line_no,
                message,
            };
            let inst = match format {
                DatasetFormat::Tsv => {
                    let fields: Vec<&str> = line.split('\t').collect();
                    if fields.len() != 5 {
                        return Err(parse_err(format!(
                            "expected 5 tab-separated fields, got {}",
                            fields.len()
                        )));
                    }
                    if no == 0 && fields[0] == "query_id" {
                        continue;
                    }
                    QaInstance {
                        query_id: fields[0].trim().to_string(),
                        candidate_id: fields[1].trim().to_string(),
                        label: parse_label(fields[2], source, line_no)?,
                        question: tokenize(fields[3]),
                        answer: tokenize(fields[4]),
                    }
                }
                DatasetFormat::Jsonl => {
                    let rec: JsonRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
                    let label = match &rec.label {
                        serde_json::Value::Number(n) => parse_label(&n.to_string(), source, line_no)?,
                        serde_json::Value::String(s) => parse_label(s, source, line_no)?,
                        serde_json::Value::Bool(b) => u8::from(*b),
                        other => return Err(parse_err(format!("label must be 0 or 1, got {other}"))),
                    };
                    QaInstance {
                        query_id: rec.query_id,
                        candidate_id: rec.candidate_id,
                        label,
                        question: tokenize(&rec.question_text),
                        answer: tokenize(&rec.answer_text),
                    }
                }
            };
            if inst.query_id.is_empty() || inst.candidate_id.is_empty() {
                return Err(parse_err("empty query_id or candidate_id".into()));
            }
            instances.push(inst);
        }
        if instances.is_empty() {
            return Err(Error::Parse {
                path: source.to_string(),
                line: 0,
                message: "file contains no instances".into(),
            });
        }
        Self::from_instances(instances).map_err(|e| match e {
            Error::Data(message) => Error::Parse {
                path: source.to_string(),
                line: 0,
                message,
            },
            other => other,
        })
    }

    pub fn instances(&self) -> &[QaInstance] {
        &self.instances
    }

    /// `(query_id, instance indices)` in first-seen order.
    pub fn groups(&self) -> &[(String, Vec<usize>)] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn stats(&self) -> DatasetStats {
        let positives = self.instances.iter().filter(|i| i.is_positive()).count();
        DatasetStats {
            questions: self.groups.len(),
            pairs: self.instances.len(),
            positives,
            percent_correct: 100.0 * positives as f64 / self.instances.len().max(1) as f64,
        }
    }

    /// Groups without a single positive candidate.
    pub fn groups_without_positive(&self) -> usize {
        self.groups
            .iter()
            .filter(|(_, idx)| !idx.iter().any(|&i| self.instances[i].is_positive()))
            .count()
    }

    /// Writes the TSV form (tokens re-joined by spaces).
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for inst in &self.instances {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                inst.query_id,
                inst.candidate_id,
                inst.label,
                inst.question.join(" "),
                inst.answer.join(" ")
            ));
        }
        out
    }
}
