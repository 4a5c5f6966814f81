//! Acceptance criteria. Runs without the test harness so that every
//! criterion prints exactly one `PASS`/`FAIL` line under `cargo test`.
//!
//! The process exits nonzero if a criterion fails that is not listed in
//! `KNOWN_FAILURES`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use holorank::autodiff::{finite_difference_check_many, Tape, Var};
use holorank::bench::{run_bench, BenchConfig, Operator};
use holorank::bm25::{sample_negatives, Bm25Params, InvertedIndex, NegativeSampling};
use holorank::data::{
    load_pretrained_embeddings, random_embeddings, synthetic_splits, DatasetFormat, QaDataset, Split, Stopwords,
    SyntheticConfig,
};
use holorank::holo::{self, CompositionBackend};
use holorank::layers::{
    bilinear_similarity, Activation, Composition, DenseHead, HeadExtras, Init, Lstm, NtnHead, ParamStore,
};
use holorank::metrics::{self, RankedRun};
use holorank::model::{build_model, Architecture, ModelConfig};
use holorank::pipeline::{Featurizer, Ranker};
use holorank::trainer::{evaluate_dataset, pointwise_loss, train, TrainConfig};
use holorank::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tolerances, pinned.
const HOLO_TOL: f64 = 1e-10;
const GRAD_STEP: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;
const MC_TOL: f64 = 0.005;
const BM25_TOL: f64 = 1e-6;
const SLOPE_FFT_MAX: f64 = 1.25;
const SLOPE_QUADRATIC_MIN: f64 = 1.7;
const BENCH_BUDGET_S: f64 = 300.0;
const SYNTHETIC_MAP_MIN: f64 = 0.95;
const SYNTHETIC_MARGIN_MIN: f64 = 0.3;

/// Criteria expected to fail; see the decisions ledger for the analysis.
const KNOWN_FAILURES: &[u32] = &[7];

type Check = Result<(bool, String), String>;
type Criterion = (u32, &'static str, fn() -> Check);

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), uniform(rng, shape.iter().product())).unwrap()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn correlation_oracle(q: &[f64], a: &[f64]) -> Vec<f64> {
    let d = q.len();
    (0..d).map(|k| (0..d).map(|i| q[i] * a[(k + i) % d]).sum()).collect()
}

fn convolution_oracle(q: &[f64], a: &[f64]) -> Vec<f64> {
    let d = q.len();
    (0..d)
        .map(|k| (0..d).map(|i| q[i] * a[(k + d - i) % d]).sum())
        .collect()
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// 1

fn fft_matches_direct_sum() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for d in [1, 2, 3, 7, 8, 50, 64, 127, 512, 640] {
        for _ in 0..100 {
            let (q, a) = (uniform(&mut rng, d), uniform(&mut rng, d));
            let fft = holo::circular_correlation(&q, &a, CompositionBackend::Fft).map_err(err)?;
            worst = worst.max(max_abs(&fft, &correlation_oracle(&q, &a)));
        }
    }
    Ok((
        worst < HOLO_TOL,
        format!("max abs error {worst:.2e} over 1000 pairs (< {HOLO_TOL:e})"),
    ))
}

// 2

fn algebraic_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut dot_err, mut inv_err, mut comm_err) = (0.0f64, 0.0f64, 0.0f64);
    for d in [1, 2, 3, 7, 8, 50, 64, 127, 512, 640] {
        for backend in [CompositionBackend::Fft, CompositionBackend::DirectSum] {
            for _ in 0..20 {
                let (q, a) = (uniform(&mut rng, d), uniform(&mut rng, d));
                let corr = holo::circular_correlation(&q, &a, backend).map_err(err)?;
                let dot: f64 = q.iter().zip(&a).map(|(x, y)| x * y).sum();
                dot_err = dot_err.max((corr[0] - dot).abs());
                let via_inverse =
                    holo::circular_convolution(&holo::approximate_inverse(&q), &a, backend).map_err(err)?;
                inv_err = inv_err.max(max_abs(&corr, &via_inverse));
                let qa = holo::circular_convolution(&q, &a, backend).map_err(err)?;
                let aq = holo::circular_convolution(&a, &q, backend).map_err(err)?;
                comm_err = comm_err
                    .max(max_abs(&qa, &aq))
                    .max(max_abs(&qa, &convolution_oracle(&q, &a)));
            }
        }
    }
    // e0 ⋆ e1 = e1 but e1 ⋆ e0 = e2 at d = 3.
    let (e0, e1) = ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
    let forward = holo::circular_correlation(&e0, &e1, CompositionBackend::Fft).map_err(err)?;
    let reverse = holo::circular_correlation(&e1, &e0, CompositionBackend::Fft).map_err(err)?;
    let witness = max_abs(&forward, &reverse);
    let pass = dot_err < HOLO_TOL && inv_err < HOLO_TOL && comm_err < HOLO_TOL && witness > 0.5;
    Ok((
        pass,
        format!(
            "[q⋆a]0=dot {dot_err:.1e}, q⋆a=q̃∗a {inv_err:.1e}, q∗a=a∗q {comm_err:.1e}, \
             non-commutativity witness |e0⋆e1 − e1⋆e0| = {witness}"
        ),
    ))
}

// 3

fn weighted_sum(tape: &mut Tape<f64>, x: Var, weights: &Tensor<f64>) -> holorank::Result<Var> {
    let w = tape.constant(weights.clone());
    let p = tape.mul(x, w)?;
    Ok(tape.sum(p))
}

fn correlation_backward_error(rng: &mut ChaCha8Rng, d: usize, backend: CompositionBackend) -> holorank::Result<f64> {
    let (q, a, w) = (uniform(rng, d), uniform(rng, d), uniform(rng, d));
    let energy = |q: &[f64], a: &[f64]| -> f64 { correlation_oracle(q, a).iter().zip(&w).map(|(c, w)| c * w).sum() };
    let (gq, ga) = holo::correlation_backward(&w, &q, &a, backend)?;
    let mut worst = 0.0f64;
    for (which, analytic) in [(0, &gq), (1, &ga)] {
        for i in 0..d {
            let (mut plus, mut minus) = ([q.clone(), a.clone()], [q.clone(), a.clone()]);
            plus[which][i] += GRAD_STEP;
            minus[which][i] -= GRAD_STEP;
            let numeric = (energy(&plus[0], &plus[1]) - energy(&minus[0], &minus[1])) / (2.0 * GRAD_STEP);
            worst = worst.max((analytic[i] - numeric).abs() / analytic[i].abs().max(1.0));
        }
    }
    Ok(worst)
}

fn gradient_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut parts = Vec::new();

    let mut corr = 0.0f64;
    for d in [1, 2, 5, 8, 13] {
        for backend in [CompositionBackend::Fft, CompositionBackend::DirectSum] {
            corr = corr.max(correlation_backward_error(&mut rng, d, backend).map_err(err)?);
        }
    }
    parts.push(("correlation_backward", corr));

    // LSTM, L=4, n=3, d=5, three layers; inputs are checked too.
    let mut store = ParamStore::<f64>::new();
    let lstm = Lstm::new(&mut store, "lstm", 3, 5, 3, &mut Init { rng: &mut rng }).map_err(err)?;
    let w = tensor(&mut rng, &[4, 5]);
    let mut inputs = store.tensors().to_vec();
    inputs.extend((0..4).map(|_| tensor(&mut rng, &[1, 3])));
    let n = store.len();
    let r = finite_difference_check_many(
        |tape, v| {
            let out = lstm.forward(tape, &v[..n], &v[n..])?;
            let seq = tape.concat_rows(&out.hidden)?;
            weighted_sum(tape, seq, &w)
        },
        &inputs,
        GRAD_STEP,
    )
    .map_err(err)?;
    parts.push(("lstm", r.max_relative_error));

    // Tensor head, n=4, r=2, batch of 3.
    let mut store = ParamStore::<f64>::new();
    let ntn = NtnHead::new(
        &mut store,
        "ntn",
        4,
        2,
        HeadExtras::default(),
        &mut Init { rng: &mut rng },
    )
    .map_err(err)?;
    let w = tensor(&mut rng, &[3, 2]);
    let mut inputs = store.tensors().to_vec();
    inputs.extend([tensor(&mut rng, &[3, 4]), tensor(&mut rng, &[3, 4])]);
    let n = store.len();
    let r = finite_difference_check_many(
        |tape, v| {
            let logits = ntn.forward(tape, &v[..n], v[n], v[n + 1], None, None)?;
            weighted_sum(tape, logits, &w)
        },
        &inputs,
        GRAD_STEP,
    )
    .map_err(err)?;
    parts.push(("ntn head", r.max_relative_error));

    // Holographic head, d=6, h=4, with similarity, features and a dropout mask.
    let extras = HeadExtras {
        bilinear_similarity: true,
        overlap_features: true,
    };
    let mut store = ParamStore::<f64>::new();
    let head = DenseHead::new(
        &mut store,
        "hd",
        6,
        4,
        Composition::Correlation(CompositionBackend::Fft),
        extras,
        Activation::Tanh,
        &mut Init { rng: &mut rng },
    )
    .map_err(err)?;
    let feats = tensor(&mut rng, &[3, 4]);
    let mask = Tensor::new(
        vec![3, 11],
        (0..33).map(|i| if i % 5 == 0 { 0.0 } else { 2.0 }).collect(),
    )
    .unwrap();
    let w = tensor(&mut rng, &[3, 2]);
    let mut inputs = store.tensors().to_vec();
    inputs.extend([tensor(&mut rng, &[3, 6]), tensor(&mut rng, &[3, 6])]);
    let n = store.len();
    let r = finite_difference_check_many(
        |tape, v| {
            let f = tape.constant(feats.clone());
            let m = tape.constant(mask.clone());
            let logits = head.forward(tape, &v[..n], v[n], v[n + 1], Some(f), Some(m))?;
            weighted_sum(tape, logits, &w)
        },
        &inputs,
        GRAD_STEP,
    )
    .map_err(err)?;
    parts.push(("holographic head", r.max_relative_error));

    let w = tensor(&mut rng, &[3, 1]);
    let inputs = [
        tensor(&mut rng, &[3, 5]),
        tensor(&mut rng, &[5, 5]),
        tensor(&mut rng, &[3, 5]),
    ];
    let r = finite_difference_check_many(
        |tape, v| {
            let s = bilinear_similarity(tape, v[0], v[1], v[2])?;
            weighted_sum(tape, s, &w)
        },
        &inputs,
        GRAD_STEP,
    )
    .map_err(err)?;
    parts.push(("bilinear similarity", r.max_relative_error));

    parts.push(("full hd-lstm loss", full_model_gradient(&mut rng).map_err(err)?));

    let worst = parts.iter().map(|p| p.1).fold(0.0, f64::max);
    let detail = parts
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((worst < GRAD_TOL, format!("{detail} (< {GRAD_TOL:e})")))
}

fn full_model_gradient(rng: &mut ChaCha8Rng) -> holorank::Result<f64> {
    let ds = QaDataset::parse(
        "q1\tc1\t1\twhat colour is the sky\tthe sky is blue\n\
         q1\tc2\t0\twhat colour is the sky\tgrass grows fast\n",
        DatasetFormat::Tsv,
        "inline",
    )?;
    let featurizer = Featurizer::fit(&ds, &[], Stopwords::english());
    let config = ModelConfig {
        embed_dim: 3,
        lstm_dim: 4,
        lstm_layers: 2,
        hidden_dim: Some(3),
        max_len_q: 4,
        max_len_a: 5,
        seed: 5,
        ..Default::default()
    };
    let emb = random_embeddings(featurizer.vocabulary.len(), 3, 6)?;
    let model = build_model(config.clone(), emb)?;
    let pairs = featurizer.encode_dataset(&config, &ds);
    let labels = [1u8, 0];
    let width = model.dropout_width();
    let mask = Tensor::new(
        vec![2, width],
        (0..2 * width)
            .map(|_| if rng.random::<f64>() < 0.5 { 0.0 } else { 2.0 })
            .collect(),
    )?;
    let r = finite_difference_check_many(
        |tape, v| {
            let m = tape.constant(mask.clone());
            let logits = model.forward(tape, v, &pairs, Some(m))?;
            pointwise_loss(tape, logits, &labels, v, 1e-2)
        },
        model.params.tensors(),
        GRAD_STEP,
    )?;
    Ok(r.max_relative_error)
}

// 4

fn parameter_accounting() -> Check {
    let (d, h, k) = (640usize, 64usize, 5usize);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::<f64>::new();
    let hd = DenseHead::new(
        &mut store,
        "hd",
        d,
        h,
        Composition::Correlation(CompositionBackend::Fft),
        HeadExtras::default(),
        Activation::Tanh,
        &mut Init { rng: &mut rng },
    )
    .map_err(err)?;
    let hd_stored = store.count();
    let mut store = ParamStore::<f64>::new();
    let ntn = NtnHead::new(
        &mut store,
        "ntn",
        d,
        k,
        HeadExtras::default(),
        &mut Init { rng: &mut rng },
    )
    .map_err(err)?;
    let ntn_stored = store.count();

    // W_h, b_h, W_f, b_f.
    let hd_expected = d * h + h + h * 2 + 2;
    // M, V, b, u, u_bias.
    let ntn_expected = d * d * k + 2 * d * k + k + k * 2 + 2;
    let ratio = ntn_expected as f64 / hd_expected as f64;
    let printed_formula = 2 * d * h + 4 * h;
    let pass = hd_expected == 41_154
        && ntn_expected == 2_054_417
        && hd.parameter_count() == hd_expected
        && hd_stored == hd_expected
        && ntn.parameter_count() == ntn_expected
        && ntn_stored == ntn_expected
        && Operator::FftCorrelation.parameters(d, h, k) == hd_expected
        && Operator::TensorSlices.parameters(d, h, k) == ntn_expected
        && ratio > 49.0;
    Ok((
        pass,
        format!(
            "holographic {hd_stored}, tensor {ntn_stored}, ratio {ratio:.1}x; \
             the printed 2dh+4h form gives {printed_formula}, which does not match the head as built"
        ),
    ))
}

// 5

fn complexity_scaling() -> Check {
    let cfg = BenchConfig::default();
    let dims: Vec<usize> = (8..=14).map(|e| 1usize << e).collect();
    if cfg.dims != dims || cfg.repetitions < 30 {
        return Err(format!(
            "default bench grid changed: {:?}, {} reps",
            cfg.dims, cfg.repetitions
        ));
    }
    let started = Instant::now();
    let report = run_bench(&cfg).map_err(err)?;
    let elapsed = started.elapsed().as_secs_f64();
    for line in report.to_table().lines() {
        println!("      {line}");
    }
    let fft = report.slope(Operator::FftCorrelation).map_err(err)?;
    let direct = report.slope(Operator::DirectCorrelation).map_err(err)?;
    let tensor = report.slope(Operator::TensorSlices).map_err(err)?;
    let pass =
        fft < SLOPE_FFT_MAX && direct > SLOPE_QUADRATIC_MIN && tensor > SLOPE_QUADRATIC_MIN && elapsed < BENCH_BUDGET_S;
    Ok((
        pass,
        format!("slopes fft {fft:.3} (< {SLOPE_FFT_MAX}), direct {direct:.3}, tensor {tensor:.3} (> {SLOPE_QUADRATIC_MIN}); {elapsed:.0}s"),
    ))
}

// 6

fn run_of(groups: &[(&str, &[u8])]) -> holorank::Result<RankedRun> {
    // Scores descend in list order.
    let rows = groups.iter().flat_map(|(q, labels)| {
        labels
            .iter()
            .enumerate()
            .map(move |(i, &l)| (q.to_string(), format!("{q}-c{i}"), 100.0 - i as f64, l))
    });
    RankedRun::from_scores("fixture", rows)
}

fn metric_oracles() -> Check {
    let ap = metrics::mean_average_precision(&run_of(&[("q", &[0, 1, 0, 1])]).map_err(err)?).map_err(err)?;
    let map =
        metrics::mean_average_precision(&run_of(&[("a", &[1, 0]), ("b", &[0, 1, 0, 1])]).map_err(err)?).map_err(err)?;
    let mrr = metrics::mean_reciprocal_rank(&run_of(&[("q", &[0, 1, 0])]).map_err(err)?).map_err(err)?;
    let p1 = metrics::precision_at_1(&run_of(&[("a", &[1, 0]), ("b", &[0, 1])]).map_err(err)?).map_err(err)?;
    let fixtures = (ap - 0.5).abs() < 1e-12 && (map - 0.75).abs() < 1e-12 && (mrr - 0.5).abs() < 1e-12 && p1 == 0.5;

    let base = metrics::random_baseline(&[vec![1, 0, 0, 0, 0]], 100_000, 6).map_err(err)?;
    let exact_mrr = (1.0 + 1.0 / 2.0 + 1.0 / 3.0 + 1.0 / 4.0 + 1.0 / 5.0) / 5.0;
    let pass = fixtures
        && (base.p_at_1 - 0.2000).abs() <= MC_TOL
        && (base.mrr - 0.4570).abs() <= MC_TOL
        && (base.mrr - exact_mrr).abs() <= MC_TOL;
    Ok((
        pass,
        format!(
            "fixtures AP {ap} MAP {map} MRR {mrr} P@1 {p1}; random P@1 {:.4} MRR {:.4} (exact {exact_mrr:.4}, ±{MC_TOL})",
            base.p_at_1, base.mrr
        ),
    ))
}

// 7

fn synthetic_model(arch: Architecture, featurizer: &Featurizer) -> holorank::Result<Ranker<f64>> {
    let config = ModelConfig {
        architecture: arch,
        embed_dim: 32,
        lstm_dim: 32,
        lstm_layers: 1,
        hidden_dim: Some(16),
        use_overlap_feats: false,
        max_len_q: 8,
        max_len_a: 10,
        seed: 1,
        ..Default::default()
    };
    let emb = random_embeddings(featurizer.vocabulary.len(), config.embed_dim, 2)?;
    Ok(Ranker {
        model: build_model(config, emb)?,
        featurizer: featurizer.clone(),
    })
}

fn synthetic_learning() -> Check {
    let started = Instant::now();
    let splits = synthetic_splits(SyntheticConfig::default()).map_err(err)?;
    let featurizer = Featurizer::fit(&splits.train, &[&splits.dev, &splits.test], Stopwords::english());
    let cfg = TrainConfig {
        learning_rate: 2e-3,
        batch_size: 32,
        max_epochs: 30,
        patience: 30,
        seed: 3,
        ..Default::default()
    };
    let groups: Vec<Vec<u8>> = splits
        .test
        .groups()
        .iter()
        .map(|(_, idx)| idx.iter().map(|&i| splits.test.instances()[i].label).collect())
        .collect();
    let random = metrics::random_baseline(&groups, 1000, 7).map_err(err)?.map;

    let mut results = Vec::new();
    for arch in [Architecture::HdLstm, Architecture::ConcatLstm] {
        let mut ranker = synthetic_model(arch, &featurizer).map_err(err)?;
        let untrained = evaluate_dataset(&ranker, &splits.test, 256, 1).map_err(err)?.map;
        let report = train(&mut ranker, &splits.train, &splits.dev, &cfg, None).map_err(err)?;
        let best_dev = report.best().map_or(0.0, |b| b.dev_map);
        let test = evaluate_dataset(&ranker, &splits.test, 256, 1).map_err(err)?.map;
        results.push((arch, untrained, best_dev, test));
    }
    let (_, untrained, dev, hd) = results[0];
    let concat = results[1].3;
    let pass = hd > SYNTHETIC_MAP_MIN && hd - random > SYNTHETIC_MARGIN_MIN && hd - untrained > SYNTHETIC_MARGIN_MIN;
    let order = if hd >= concat { "≥" } else { "<" };
    Ok((
        pass,
        format!(
            "hdlstm test MAP {hd:.4} (best dev {dev:.4}), random {random:.4}, untrained {untrained:.4}; \
             hdlstm {order} concatlstm ({concat:.4}); {:.0}s",
            started.elapsed().as_secs_f64()
        ),
    ))
}

// 8

// The fixture value is quoted to four digits.
#[allow(clippy::approx_constant)]
fn bm25_contract() -> Check {
    let index = InvertedIndex::build([("d1", vec!["a", "x"]), ("d2", vec!["b", "y"])]).map_err(err)?;
    let params = Bm25Params::default();
    let score = index.score(&["a"], "d1", params).map_err(err)?;
    let (n, df, tf, len_ratio) = (2.0f64, 1.0f64, 1.0f64, 1.0f64);
    let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
    let expected = idf * (tf * (params.k1 + 1.0)) / (tf + params.k1 * (1.0 - params.b + params.b * len_ratio));
    let fixture = (score - expected).abs() < BM25_TOL && (score - 0.6931).abs() < 1e-4;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let words: Vec<String> = (0..30).map(|i| format!("t{i}")).collect();
    let docs: Vec<(String, Vec<String>)> = (0..60)
        .map(|i| {
            (
                format!("doc{i}"),
                (0..6).map(|_| words[rng.random_range(0..30)].clone()).collect(),
            )
        })
        .collect();
    let index = InvertedIndex::build(docs.clone()).map_err(err)?;
    let mut leaks = 0;
    let mut short = 0;
    for seed in 0..1000u64 {
        let (gold, text) = &docs[seed as usize % docs.len()];
        let cfg = NegativeSampling {
            pool_size: 20,
            k: 4,
            seed,
            params,
        };
        let negs = sample_negatives(text, gold, &index, cfg).map_err(err)?;
        leaks += negs.iter().filter(|n| *n == gold).count();
        let mut uniq = negs.clone();
        uniq.sort();
        uniq.dedup();
        short += usize::from(negs.len() != 4 || uniq.len() != 4);
    }
    Ok((
        fixture && leaks == 0 && short == 0,
        format!("score {score:.6} (oracle {expected:.6}); gold returned {leaks} times, malformed draws {short} over 1000 seeds"),
    ))
}

// 9

fn small_synthetic() -> holorank::Result<(QaDataset, QaDataset, Featurizer)> {
    let splits = synthetic_splits(SyntheticConfig {
        train_questions: 40,
        dev_questions: 10,
        test_questions: 10,
        content_words: 30,
        seed: 9,
        ..Default::default()
    })?;
    let featurizer = Featurizer::fit(&splits.train, &[&splits.dev], Stopwords::english());
    Ok((splits.train, splits.dev, featurizer))
}

type RunTrace = (Vec<u8>, Vec<(String, Vec<u8>)>, Vec<(u64, u64, u64)>);

fn run_once(dir: &Path) -> Result<RunTrace, String> {
    let (train_set, dev_set, featurizer) = small_synthetic().map_err(err)?;
    let config = ModelConfig {
        embed_dim: 8,
        lstm_dim: 8,
        lstm_layers: 2,
        hidden_dim: Some(6),
        max_len_q: 8,
        max_len_a: 10,
        seed: 11,
        ..Default::default()
    };
    let emb = random_embeddings(featurizer.vocabulary.len(), 8, 12).map_err(err)?;
    let mut ranker = Ranker {
        model: build_model(config, emb).map_err(err)?,
        featurizer,
    };
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 16,
        max_epochs: 4,
        seed: 13,
        workers: 2,
        ..Default::default()
    };
    let report = train(&mut ranker, &train_set, &dev_set, &cfg, Some(dir)).map_err(err)?;
    let mut files = Vec::new();
    for c in &report.checkpoints {
        let p = c.path.clone().expect("written to disk");
        files.push((
            p.file_name().unwrap().to_string_lossy().into_owned(),
            fs::read(&p).map_err(err)?,
        ));
    }
    let history = report
        .history
        .iter()
        .map(|r| (r.loss.to_bits(), r.dev_map.to_bits(), r.dev_mrr.to_bits()))
        .collect();
    Ok((ranker.to_bytes(serde_json::json!({})).map_err(err)?, files, history))
}

fn reproducibility() -> Check {
    let tmp = tempfile::tempdir().map_err(err)?;
    let first = run_once(&tmp.path().join("a"))?;
    let second = run_once(&tmp.path().join("b"))?;
    let pass = first == second && !first.1.is_empty();
    Ok((
        pass,
        format!(
            "{} checkpoints and {} epoch records compared byte for byte ({} bytes per model)",
            first.1.len(),
            first.2.len(),
            first.0.len()
        ),
    ))
}

// 10

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/trec")
        .join(name)
}

fn trec_regime() -> Check {
    let started = Instant::now();
    let load = |name: &str, split| QaDataset::load(fixture(name), DatasetFormat::Tsv).map(|d| d.with_split(split));
    let train_set = load("train.tsv", Split::Train).map_err(err)?;
    let dev_set = load("dev.tsv", Split::Dev).map_err(err)?;
    let test_set = load("test.tsv", Split::Test).map_err(err)?;
    let featurizer = Featurizer::fit(&train_set, &[&dev_set, &test_set], Stopwords::english());
    let config = ModelConfig::default();
    let emb = load_pretrained_embeddings(fixture("embeddings.txt"), &featurizer.vocabulary, Some(50), config.seed)
        .map_err(err)?;
    let mut ranker = Ranker {
        model: build_model(config, emb).map_err(err)?,
        featurizer,
    };
    let c = &ranker.model.config;
    let regime = c.lstm_dim == 640 && c.lstm_layers >= 2 && c.dropout_rate == 0.5 && c.embed_dim == 50;
    let cfg = TrainConfig {
        max_epochs: 3,
        ..Default::default()
    };
    let regime = regime && cfg.clip_norm == 1.0 && cfg.l2_lambda == 1e-5 && cfg.batch_size == 256 && cfg.patience == 5;
    let tmp = tempfile::tempdir().map_err(err)?;
    let report = train(&mut ranker, &train_set, &dev_set, &cfg, Some(tmp.path())).map_err(err)?;
    let test = evaluate_dataset(&ranker, &test_set, 256, 1).map_err(err)?;
    let finite = report.history.iter().all(|r| r.loss.is_finite()) && (0.0..=1.0).contains(&test.map);
    Ok((
        regime && finite && !report.checkpoints.is_empty(),
        format!(
            "d=640 x{} layers, {} epochs, test MAP {:.4} MRR {:.4} (not gated); {:.0}s",
            ranker.model.config.lstm_layers,
            report.history.len(),
            test.map,
            test.mrr,
            started.elapsed().as_secs_f64()
        ),
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "holographic oracle equivalence", fft_matches_direct_sum),
        (2, "algebraic identities", algebraic_identities),
        (3, "gradient suite", gradient_suite),
        (4, "parameter accounting", parameter_accounting),
        (5, "complexity scaling", complexity_scaling),
        (6, "metric oracles", metric_oracles),
        (7, "end-to-end learning on the synthetic task", synthetic_learning),
        (8, "bm25", bm25_contract),
        (9, "reproducibility", reproducibility),
        (10, "trec-format pipeline at full size", trec_regime),
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());

    let mut unexpected = Vec::new();
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let (pass, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let known = KNOWN_FAILURES.contains(&id);
        let status = if pass { "PASS" } else { "FAIL" };
        let note = match (pass, known) {
            (false, true) => " [known failure]",
            (true, true) => " [listed as known failure but passed]",
            _ => "",
        };
        println!("{status} {id:>2} {name}: {detail}{note}");
        if !pass && !known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
