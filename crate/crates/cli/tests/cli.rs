use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use holorank::data::{random_embeddings, synthetic_splits, Stopwords, SyntheticConfig};
use holorank::metrics::read_run_file;
use holorank::model::{build_model, Head, ModelConfig};
use holorank::pipeline::{Featurizer, Ranker};
use holorank::Tensor;
use tempfile::TempDir;

fn holorank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holorank"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let s = synthetic_splits(SyntheticConfig {
            train_questions: 30,
            dev_questions: 10,
            test_questions: 10,
            content_words: 20,
            ..Default::default()
        })
        .unwrap();
        fs::write(dir.path().join("train.tsv"), s.train.to_tsv()).unwrap();
        fs::write(dir.path().join("dev.tsv"), s.dev.to_tsv()).unwrap();
        fs::write(dir.path().join("test.tsv"), s.test.to_tsv()).unwrap();
        fs::write(
            dir.path().join("tiny.toml"),
            "model.embed_dim = 8\nmodel.lstm_dim = 8\nmodel.lstm_layers = 1\nmodel.hidden_dim = 4\n\
             model.max_len_q = 8\nmodel.max_len_a = 10\n\
             train.max_epochs = 2\ntrain.patience = 2\ntrain.batch_size = 16\ntrain.learning_rate = 1e-3\n",
        )
        .unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn train(&self, out: &str, extra: &[&str]) -> Output {
        let (cfg, tr, dv, ts, o) = (
            self.s("tiny.toml"),
            self.s("train.tsv"),
            self.s("dev.tsv"),
            self.s("test.tsv"),
            self.s(out),
        );
        let mut args = vec![
            "train", "--config", &cfg, "--train", &tr, "--dev", &dv, "--test", &ts, "--out", &o,
        ];
        args.extend_from_slice(extra);
        holorank(&args)
    }
}

fn last_line(s: &str) -> &str {
    s.lines().last().unwrap_or("")
}

#[test]
fn train_is_deterministic_and_writes_artifacts() {
    let fx = Fixture::new();
    let a = fx.train("a", &["--seed", "7"]);
    assert!(a.status.success(), "{}", stderr(&a));
    let b = fx.train("b", &["--seed", "7"]);
    assert!(b.status.success());
    assert!(last_line(&stdout(&a)).starts_with("best dev MAP "), "{}", stdout(&a));
    assert_eq!(last_line(&stdout(&a)), last_line(&stdout(&b)));
    assert_eq!(
        fs::read(fx.path("a/best.bin")).unwrap(),
        fs::read(fx.path("b/best.bin")).unwrap()
    );
    for f in ["manifest.toml", "train_log.jsonl", "metrics.json", "test.run"] {
        assert!(fx.path("a").join(f).is_file(), "{f}");
    }
    let manifest = fs::read_to_string(fx.path("a/manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 7"), "{manifest}");

    // The manifest alone reproduces the run.
    let c = holorank(&["train", "--config", &fx.s("a/manifest.toml"), "--out", &fx.s("c")]);
    assert!(c.status.success(), "{}", stderr(&c));
    assert_eq!(
        fs::read(fx.path("a/best.bin")).unwrap(),
        fs::read(fx.path("c/best.bin")).unwrap()
    );
}

#[test]
fn missing_embeddings_exit_two_and_name_the_path() {
    let fx = Fixture::new();
    let missing = fx.s("nowhere/vectors.txt");
    let o = fx.train("x", &["--embeddings", &missing]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(&missing), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    let fx = Fixture::new();
    let o = fx.train("x", &["--set", "model.no_such_key=1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = holorank(&["train", "--dev", &fx.s("dev.tsv")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--train"));
    let o = holorank(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = fx.train("x", &["--arch", "cnn"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_one() {
    let fx = Fixture::new();
    let o = fx.train(
        "x",
        &["--set", "train.learning_rate=1e300", "--set", "train.clip_norm=1e300"],
    );
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), stderr(&o));
}

fn count_params(extra: &[&str]) -> String {
    let mut args = vec![
        "count-params",
        "--set",
        "model.use_bilinear_sim=false",
        "--set",
        "model.use_overlap_feats=false",
    ];
    args.extend_from_slice(extra);
    let o = holorank(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    stdout(&o)
}

fn head_line(out: &str) -> usize {
    let line = out.lines().find(|l| l.starts_with("head")).unwrap();
    line.split_whitespace().last().unwrap().parse().unwrap()
}

#[test]
fn count_params_follows_the_architecture_flag() {
    let hd = count_params(&[]);
    let ntn = count_params(&["--arch", "ntnlstm"]);
    assert_eq!(head_line(&hd), 41_154);
    assert_eq!(head_line(&ntn), 2_054_417);
    assert!(hd.contains("82176"), "{hd}");
    let cat = count_params(&[
        "--arch",
        "concatlstm",
        "--set",
        "model.lstm_dim=10",
        "--set",
        "model.hidden_dim=3",
    ]);
    assert_eq!(head_line(&cat), 2 * 10 * 3 + 3 + 2 * 3 + 2);
}

fn trained_checkpoint(fx: &Fixture) -> PathBuf {
    let o = fx.train("m", &["--seed", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    fx.path("m/best.bin")
}

fn metric(out: &str, name: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix(name))
        .unwrap()
        .trim()
        .to_owned()
}

#[test]
fn evaluate_prints_four_decimals_and_a_parseable_run() {
    let fx = Fixture::new();
    let ckpt = trained_checkpoint(&fx).display().to_string();
    let run = fx.s("eval.run");
    let args = [
        "evaluate",
        "--checkpoint",
        &ckpt,
        "--test",
        &fx.s("test.tsv"),
        "--run-file",
        &run,
    ];
    let a = holorank(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    for m in ["MAP ", "MRR ", "P@1 "] {
        let v = metric(&stdout(&a), m);
        assert_eq!(v.split('.').nth(1).map(str::len), Some(4), "{v}");
    }
    let parsed = read_run_file(&run).unwrap();
    assert_eq!(parsed.queries.iter().map(|q| q.entries.len()).sum::<usize>(), 50);
    let b = holorank(&args);
    assert_eq!(stdout(&a), stdout(&b));

    let wrong = holorank(&[
        "evaluate",
        "--checkpoint",
        &ckpt,
        "--test",
        &fx.s("test.tsv"),
        "--run-file",
        &run,
        "--arch",
        "ntnlstm",
    ]);
    assert_eq!(wrong.status.code(), Some(2));
    let missing = holorank(&[
        "evaluate",
        "--checkpoint",
        &fx.s("none.bin"),
        "--test",
        &fx.s("test.tsv"),
    ]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("none.bin"));
}

#[test]
fn evaluate_rejects_a_foreign_vocabulary() {
    let fx = Fixture::new();
    let ckpt = trained_checkpoint(&fx).display().to_string();
    fs::write(fx.path("alien.tsv"), "q\tc1\t1\tzzz yyy\txxx\nq\tc2\t0\tzzz\tvvv\n").unwrap();
    let o = holorank(&[
        "evaluate",
        "--checkpoint",
        &ckpt,
        "--test",
        &fx.s("alien.tsv"),
        "--run-file",
        &fx.s("r.run"),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

/// Scores every pair by its stopword-free overlap, which separates the
/// synthetic task exactly.
fn perfect_checkpoint(fx: &Fixture) -> PathBuf {
    let train = holorank::data::QaDataset::load(fx.path("train.tsv"), holorank::data::DatasetFormat::Tsv).unwrap();
    let test = holorank::data::QaDataset::load(fx.path("test.tsv"), holorank::data::DatasetFormat::Tsv).unwrap();
    let featurizer = Featurizer::fit(&train, &[&test], Stopwords::english());
    let config = ModelConfig {
        embed_dim: 4,
        lstm_dim: 4,
        lstm_layers: 1,
        hidden_dim: Some(2),
        use_bilinear_sim: false,
        max_len_q: 8,
        max_len_a: 10,
        ..Default::default()
    };
    let emb = random_embeddings(featurizer.vocabulary.len(), 4, 0).unwrap();
    let mut model = build_model::<f64>(config, emb).unwrap();
    let Head::Dense(head) = model.head.clone() else {
        unreachable!()
    };
    let width = head.input_width();
    let mut w_h = vec![0.0; width * 2];
    w_h[(4 + 2) * 2] = 1.0;
    *model.params.get_mut(head.w_h) = Tensor::matrix(width, 2, w_h).unwrap();
    *model.params.get_mut(head.w_f) = Tensor::matrix(2, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
    let path = fx.path("perfect.bin");
    Ranker { model, featurizer }.save(&path, serde_json::json!({})).unwrap();
    path
}

#[test]
fn perfect_ranker_scores_one() {
    let fx = Fixture::new();
    let ckpt = perfect_checkpoint(&fx).display().to_string();
    let o = holorank(&[
        "evaluate",
        "--checkpoint",
        &ckpt,
        "--test",
        &fx.s("test.tsv"),
        "--out",
        &fx.s(""),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(metric(&stdout(&o), "MAP "), "1.0000");
    assert_eq!(metric(&stdout(&o), "MRR "), "1.0000");
    assert!(fx.path("eval.run").is_file());
}

fn rank(fx: &Fixture, ckpt: &Path, candidates: &str) -> Output {
    fs::write(fx.path("cands.txt"), candidates).unwrap();
    holorank(&[
        "rank",
        "--checkpoint",
        &ckpt.display().to_string(),
        "--question",
        "what is w001 of w002",
        "--candidates",
        &fx.s("cands.txt"),
    ])
}

fn ranked(o: &Output) -> Vec<(String, f64)> {
    stdout(o)
        .lines()
        .map(|l| {
            let (id, s) = l.split_once('\t').unwrap();
            (id.to_owned(), s.parse().unwrap())
        })
        .collect()
}

#[test]
fn rank_orders_candidates() {
    let fx = Fixture::new();
    let ckpt = trained_checkpoint(&fx);

    let one = ranked(&rank(&fx, &ckpt, "only\tw001 is here\n"));
    assert_eq!(one.len(), 1);
    assert!((0.0..=1.0).contains(&one[0].1));

    let o = rank(
        &fx,
        &ckpt,
        "b\tthe w003 w001\na\tthe w003 w001\nc\tw002 w001 is\nd\tit was w009\n",
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r = ranked(&o);
    assert_eq!(r.len(), 4);
    assert!(r.windows(2).all(|w| w[0].1 >= w[1].1));
    let score = |id: &str| r.iter().find(|(i, _)| i == id).unwrap().1;
    assert_eq!(score("a"), score("b"));
    let pos = |id: &str| r.iter().position(|(i, _)| i == id).unwrap();
    assert_eq!(pos("a") + 1, pos("b"), "ties break by id");

    let empty = rank(&fx, &ckpt, "\n\n");
    assert_eq!(empty.status.code(), Some(2));
}

#[test]
fn perfect_ranker_puts_the_overlapping_candidate_first() {
    let fx = Fixture::new();
    let ckpt = perfect_checkpoint(&fx);
    let r = ranked(&rank(&fx, &ckpt, "x\tit was w009\ny\tthe w002 is w001\n"));
    assert_eq!(r[0].0, "y");
}

#[test]
fn bench_prints_table_with_parameter_counts() {
    let o = holorank(&["bench", "--dims", "640,1024", "--repetitions", "3", "--warmup", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let params = |op: &str| -> Vec<usize> {
        out.lines()
            .filter(|l| l.starts_with(op))
            .map(|l| l.split_whitespace().nth(2).unwrap().parse().unwrap())
            .collect()
    };
    assert_eq!(params("correlation_fft")[0], 41_154);
    assert_eq!(params("correlation_direct")[0], 41_154);
    assert_eq!(params("tensor_slices")[0], 2_054_417);
    assert_eq!(params("concat_dense")[1], 2 * 1024 * 64 + 64 + 128 + 2);
    assert!(out.contains("slope correlation_fft"));

    let bad = holorank(&["bench", "--dims", "0"]);
    assert_eq!(bad.status.code(), Some(2));
}
