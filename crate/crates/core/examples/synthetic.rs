//! Trains a small model on the synthetic overlap task and prints the
//! per-epoch dev metrics and the final test metrics.
//!
//! `cargo run --release --example synthetic -- [arch] [lr] [batch] [epochs]`

use std::time::Instant;

use holorank::data::{random_embeddings, synthetic_splits, Stopwords, SyntheticConfig};
use holorank::model::{build_model, ModelConfig};
use holorank::pipeline::{Featurizer, Ranker};
use holorank::trainer::{evaluate_dataset, train, TrainConfig};

fn main() -> holorank::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arch = args.first().map_or("hdlstm", String::as_str).parse()?;
    let lr: f64 = args.get(1).map_or(Ok(2e-3), |s| s.parse()).expect("lr");
    let batch: usize = args.get(2).map_or(Ok(32), |s| s.parse()).expect("batch");
    let epochs: usize = args.get(3).map_or(Ok(30), |s| s.parse()).expect("epochs");
    let dropout: f64 = args.get(4).map_or(Ok(0.5), |s| s.parse()).expect("dropout");
    let patience: usize = args.get(5).map_or(Ok(5), |s| s.parse()).expect("patience");

    let env = |k: &str, d: f64| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let splits = synthetic_splits(SyntheticConfig {
        content_words: env("CONTENT", 150.0) as usize,
        ..Default::default()
    })?;
    let featurizer = Featurizer::fit(&splits.train, &[&splits.dev, &splits.test], Stopwords::english());
    let config = ModelConfig {
        architecture: arch,
        embed_dim: env("EMBED", 32.0) as usize,
        lstm_dim: 32,
        lstm_layers: 1,
        hidden_dim: Some(16),
        use_bilinear_sim: env("SIM", 1.0) > 0.0,
        use_overlap_feats: env("FEATS", 0.0) > 0.0,
        max_len_q: 8,
        max_len_a: 10,
        seed: 1,
        dropout_rate: dropout,
        ..Default::default()
    };
    let emb = random_embeddings(featurizer.vocabulary.len(), config.embed_dim, 2)?;
    let mut ranker = Ranker {
        model: build_model(config, emb)?,
        featurizer,
    };
    let before = evaluate_dataset(&ranker, &splits.test, 256, 1)?;
    println!("untrained test MAP {:.4}", before.map);
    let cfg = TrainConfig {
        learning_rate: lr,
        batch_size: batch,
        max_epochs: epochs,
        patience,
        seed: 3,
        l2_lambda: env("L2", 1e-5),
        ..Default::default()
    };
    let t = Instant::now();
    let report = train(&mut ranker, &splits.train, &splits.dev, &cfg, None)?;
    for r in &report.history {
        println!(
            "epoch {:2} loss {:9.3} dev MAP {:.4} MRR {:.4} ({:.1}s)",
            r.epoch, r.loss, r.dev_map, r.dev_mrr, r.wall_time_s
        );
    }
    let after = evaluate_dataset(&ranker, &splits.test, 256, 1)?;
    println!(
        "test MAP {:.4} MRR {:.4} P@1 {:.4} in {:.1}s",
        after.map,
        after.mrr,
        after.p_at_1,
        t.elapsed().as_secs_f64()
    );
    Ok(())
}
