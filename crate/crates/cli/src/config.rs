//! Run configuration: a TOML file with dotted keys, `--set key=value`
//! overrides and a few dedicated flags, resolved into a [`RunManifest`].
//!
//! ```toml
//! seed = 7
//! model.architecture = "hdlstm"
//! model.lstm_dim = 640
//! train.learning_rate = 1e-5
//! data.train = "train.tsv"
//! data.dev = "dev.tsv"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use holorank::model::ModelConfig;
use holorank::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f32" => Ok(Self::F32),
            "f64" => Ok(Self::F64),
            other => Err(format!("unknown precision '{other}' (expected f32 or f64)")),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::F32 => "f32",
            Self::F64 => "f64",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Word vectors in text format; random vectors when absent.
    pub embeddings: Option<PathBuf>,
    /// One stopword per line; the shipped English list when absent.
    pub stopwords: Option<PathBuf>,
}

/// Everything a run needs. Written next to the outputs as `manifest.toml`,
/// which is itself a valid `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunManifest {
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub precision: Precision,
    pub data: DataPaths,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("holorank-run"),
            workers: 1,
            precision: Precision::F64,
            data: DataPaths::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Flag values that take precedence over the file and `--set`.
#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub seed: Option<u64>,
    pub arch: Option<String>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub precision: Option<Precision>,
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

/// Sets `a.b.c = value`, creating intermediate tables.
pub fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("malformed key '{key}'")));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("'{p}' in '{key}' is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parses `key=value`; the value is read as a TOML literal, falling back
/// to a bare string.
pub fn apply_set(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got '{assignment}'")))?;
    set_dotted(table, key.trim(), parse_value(raw.trim()))
}

fn read_table(path: &Path) -> Result<toml::Table, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

/// Resolves file, then `--set`, then flags. The top-level seed is copied
/// into the model and trainer sections.
pub fn resolve(config: Option<&Path>, sets: &[String], flags: &FlagOverrides) -> Result<RunManifest, CliError> {
    let mut table = match config {
        Some(p) => read_table(p)?,
        None => toml::Table::new(),
    };
    for s in sets {
        apply_set(&mut table, s)?;
    }
    if let Some(arch) = &flags.arch {
        set_dotted(&mut table, "model.architecture", toml::Value::String(arch.clone()))?;
    }
    let mut m: RunManifest = table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Usage(format!("invalid configuration: {}", e.message())))?;
    if let Some(seed) = flags.seed {
        m.seed = seed;
    }
    m.model.seed = m.seed;
    m.train.seed = m.seed;
    let paths = [
        (&flags.train, &mut m.data.train),
        (&flags.dev, &mut m.data.dev),
        (&flags.test, &mut m.data.test),
        (&flags.embeddings, &mut m.data.embeddings),
    ];
    for (flag, slot) in paths {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    if let Some(out) = &flags.out {
        m.out.clone_from(out);
    }
    if let Some(w) = flags.workers {
        m.workers = w;
    }
    if let Some(p) = flags.precision {
        m.precision = p;
    }
    m.train.workers = m.workers;
    if m.workers == 0 {
        return Err(CliError::Usage("workers must be at least 1".into()));
    }
    Ok(m)
}

impl RunManifest {
    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Runtime(format!("cannot serialize manifest: {e}")))
    }
}
