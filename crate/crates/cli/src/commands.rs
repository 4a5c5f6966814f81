use std::fs;
use std::path::{Path, PathBuf};

use holorank::bench::{run_bench, BenchConfig, Operator};
use holorank::data::{
    load_pretrained_embeddings, random_embeddings, tokenize, DatasetFormat, QaDataset, Split, Stopwords, Vocabulary,
};
use holorank::metrics::{evaluate, write_run_file, Metrics};
use holorank::model::{build_model, Architecture, ModelConfig};
use holorank::pipeline::{Featurizer, Ranker};
use holorank::Scalar;
use serde_json::json;

use crate::config::{Precision, RunManifest};
use crate::error::{require_file, CliError};

const SCORE_BATCH: usize = 256;

fn load_dataset(path: &Path, what: &str, split: Split) -> Result<QaDataset, CliError> {
    require_file(path, what)?;
    Ok(QaDataset::load(path, DatasetFormat::from_path(path))?.with_split(split))
}

fn required<'a>(slot: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    slot.as_deref()
        .ok_or_else(|| CliError::Usage(format!("missing {flag} (or data.{} in the config)", &flag[2..])))
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn print_metrics(prefix: &str, m: &Metrics) {
    println!("{prefix}MAP {:.4}", m.map);
    println!("{prefix}MRR {:.4}", m.mrr);
    println!("{prefix}P@1 {:.4}", m.p_at_1);
}

fn stopwords(m: &RunManifest) -> Result<Stopwords, CliError> {
    match &m.data.stopwords {
        Some(p) => {
            require_file(p, "stopwords")?;
            Ok(Stopwords::load(p)?)
        }
        None => Ok(Stopwords::english()),
    }
}

fn embeddings_for(m: &RunManifest, vocab: &Vocabulary) -> Result<holorank::layers::EmbeddingTable<f64>, CliError> {
    match &m.data.embeddings {
        Some(p) => {
            require_file(p, "embeddings")?;
            Ok(load_pretrained_embeddings(p, vocab, Some(m.model.embed_dim), m.seed)?)
        }
        None => Ok(random_embeddings(vocab.len(), m.model.embed_dim, m.seed)?),
    }
}

fn warn_config(config: &ModelConfig) -> Result<(), CliError> {
    for w in config.validate()? {
        eprintln!("warning: {w}");
    }
    Ok(())
}

pub fn train(m: &RunManifest) -> Result<(), CliError> {
    match m.precision {
        Precision::F32 => train_as::<f32>(m),
        Precision::F64 => train_as::<f64>(m),
    }
}

fn train_as<T: Scalar>(m: &RunManifest) -> Result<(), CliError> {
    let train_set = load_dataset(required(&m.data.train, "--train")?, "training", Split::Train)?;
    let dev_set = load_dataset(required(&m.data.dev, "--dev")?, "dev", Split::Dev)?;
    let test_set = match &m.data.test {
        Some(p) => Some(load_dataset(p, "test", Split::Test)?),
        None => None,
    };
    if let Some(p) = &m.data.embeddings {
        require_file(p, "embeddings")?;
    }
    warn_config(&m.model)?;
    m.train.validate()?;

    let mut others = vec![&dev_set];
    others.extend(test_set.as_ref());
    let featurizer = Featurizer::fit(&train_set, &others, stopwords(m)?);
    let emb = embeddings_for(m, &featurizer.vocabulary)?;
    let model = build_model::<T>(m.model.clone(), emb.cast())?;
    let mut ranker = Ranker { model, featurizer };

    fs::create_dir_all(&m.out).map_err(|e| io_err(&m.out, e))?;
    let manifest_path = m.out.join("manifest.toml");
    fs::write(&manifest_path, m.to_toml()?).map_err(|e| io_err(&manifest_path, e))?;

    let report = holorank::trainer::train(&mut ranker, &train_set, &dev_set, &m.train, Some(&m.out))?;
    for r in &report.history {
        println!(
            "epoch {:3}  loss {:.4}  dev MAP {:.4}  MRR {:.4}  P@1 {:.4}  ({:.1}s)",
            r.epoch, r.loss, r.dev_map, r.dev_mrr, r.dev_p_at_1, r.wall_time_s
        );
    }
    let best_epoch = report.best().map_or(0, |b| b.epoch);
    let best = report
        .history
        .iter()
        .find(|r| r.epoch == best_epoch)
        .ok_or_else(|| CliError::Runtime("training ran no epochs".into()))?;
    ranker.save(
        m.out.join("best.bin"),
        json!({ "epoch": best.epoch, "dev_map": best.dev_map }),
    )?;

    let mut summary = json!({ "best_epoch": best.epoch, "dev": { "map": best.dev_map, "mrr": best.dev_mrr, "p_at_1": best.dev_p_at_1 } });
    if let Some(test) = &test_set {
        let run = ranker.rank_dataset(test, "holorank", SCORE_BATCH, m.workers)?;
        write_run_file(&run, m.out.join("test.run"))?;
        let metrics = evaluate(&run)?;
        print_metrics("test ", &metrics);
        summary["test"] = json!({ "map": metrics.map, "mrr": metrics.mrr, "p_at_1": metrics.p_at_1 });
    }
    let summary_path = m.out.join("metrics.json");
    fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary).expect("plain json"),
    )
    .map_err(|e| io_err(&summary_path, e))?;
    println!(
        "best dev MAP {:.4} MRR {:.4} (epoch {})",
        best.dev_map, best.dev_mrr, best.epoch
    );
    Ok(())
}

fn load_ranker<T: Scalar>(path: &Path, arch: Option<Architecture>) -> Result<Ranker<T>, CliError> {
    require_file(path, "checkpoint")?;
    let (ranker, _) = Ranker::<T>::load(path).map_err(|e| match e {
        holorank::Error::Io { .. } => CliError::from(e),
        other => CliError::Usage(format!("cannot load checkpoint {}: {other}", path.display())),
    })?;
    if let Some(want) = arch {
        let have = ranker.model.config.architecture;
        if have != want {
            return Err(CliError::Usage(format!("checkpoint holds a {have} model, not {want}")));
        }
    }
    Ok(ranker)
}

pub struct EvaluateArgs {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub run_file: PathBuf,
    pub arch: Option<Architecture>,
    pub workers: usize,
    pub precision: Precision,
    pub tag: String,
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> Result<(), CliError> {
    match args.precision {
        Precision::F32 => evaluate_as::<f32>(args),
        Precision::F64 => evaluate_as::<f64>(args),
    }
}

fn evaluate_as<T: Scalar>(args: &EvaluateArgs) -> Result<(), CliError> {
    let ranker = load_ranker::<T>(&args.checkpoint, args.arch)?;
    let dataset = load_dataset(&args.dataset, "dataset", Split::Test)?;
    let vocab = &ranker.featurizer.vocabulary;
    let known = dataset
        .instances()
        .iter()
        .flat_map(|i| i.question.iter().chain(&i.answer))
        .any(|t| vocab.get(t).is_some());
    if !known {
        return Err(CliError::Usage(format!(
            "{} shares no tokens with the checkpoint vocabulary",
            args.dataset.display()
        )));
    }
    let run = ranker.rank_dataset(&dataset, &args.tag, SCORE_BATCH, args.workers)?;
    let metrics = evaluate(&run)?;
    write_run_file(&run, &args.run_file)?;
    print_metrics("", &metrics);
    if metrics.excluded > 0 {
        eprintln!(
            "note: {} questions without a positive answer were excluded",
            metrics.excluded
        );
    }
    Ok(())
}

pub struct RankArgs {
    pub checkpoint: PathBuf,
    pub question: String,
    pub candidates: PathBuf,
    pub workers: usize,
    pub precision: Precision,
}

/// `id<TAB>text` per line; lines without a tab get the id `c<line>`.
pub fn parse_candidates(text: &str) -> Vec<(String, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(no, l)| match l.split_once('\t') {
            Some((id, body)) => (id.trim().to_owned(), body.to_owned()),
            None => (format!("c{}", no + 1), l.to_owned()),
        })
        .collect()
}

pub fn rank(args: &RankArgs) -> Result<(), CliError> {
    match args.precision {
        Precision::F32 => rank_as::<f32>(args),
        Precision::F64 => rank_as::<f64>(args),
    }
}

fn rank_as<T: Scalar>(args: &RankArgs) -> Result<(), CliError> {
    let ranker = load_ranker::<T>(&args.checkpoint, None)?;
    require_file(&args.candidates, "candidates")?;
    let text = fs::read_to_string(&args.candidates).map_err(|e| io_err(&args.candidates, e))?;
    let candidates = parse_candidates(&text);
    if candidates.is_empty() {
        return Err(CliError::Usage(format!(
            "{} has no candidates",
            args.candidates.display()
        )));
    }
    let q = tokenize(&args.question);
    let pairs: Vec<_> = candidates
        .iter()
        .map(|(_, body)| ranker.featurizer.encode(&ranker.model.config, &q, &tokenize(body)))
        .collect();
    let scores = ranker.score_encoded(&pairs, SCORE_BATCH, args.workers)?;
    let mut ranked: Vec<(&str, f64)> = candidates
        .iter()
        .zip(&scores)
        .map(|((id, _), s)| (id.as_str(), s.as_f64()))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    for (id, score) in ranked {
        println!("{id}\t{score:.6}");
    }
    Ok(())
}

pub fn count_params(m: &RunManifest) -> Result<(), CliError> {
    warn_config(&m.model)?;
    let mut datasets = Vec::new();
    for (slot, what, split) in [
        (&m.data.train, "training", Split::Train),
        (&m.data.dev, "dev", Split::Dev),
        (&m.data.test, "test", Split::Test),
    ] {
        if let Some(p) = slot {
            datasets.push(load_dataset(p, what, split)?);
        }
    }
    let vocab = Vocabulary::build(&datasets.iter().collect::<Vec<_>>());
    let emb = random_embeddings(vocab.len(), m.model.embed_dim, m.seed)?;
    let model = build_model::<f64>(m.model.clone(), emb)?;
    let b = model.count_parameters();
    let (d, h) = (m.model.lstm_dim, m.model.hidden());
    println!("architecture       {}", m.model.architecture);
    println!("embedding (frozen) {:>12}  vocabulary {}", b.embedding, vocab.len());
    println!("question lstm      {:>12}", b.q_lstm);
    println!("answer lstm        {:>12}", b.a_lstm);
    println!("head               {:>12}", b.head);
    println!("trainable          {:>12}", b.trainable());
    println!("total              {:>12}", b.total);
    if m.model.architecture == Architecture::HdLstm {
        println!(
            "note: correlation keeps width d, so the head's dense part is d*h+h+2h+2 = {}; the form 2dh+4h would give {}",
            Operator::FftCorrelation.parameters(d, h, m.model.slices()),
            2 * d * h + 4 * h
        );
    }
    Ok(())
}

pub fn bench(config: &BenchConfig, json_out: Option<&Path>) -> Result<(), CliError> {
    let report = run_bench(config)?;
    print!("{}", report.to_table());
    if let Some(p) = json_out {
        let text = serde_json::to_string_pretty(&report).expect("plain json");
        fs::write(p, text).map_err(|e| io_err(p, e))?;
    }
    Ok(())
}
