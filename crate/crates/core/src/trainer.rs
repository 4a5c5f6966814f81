//! Pointwise training: summed cross-entropy plus L2, gradient-norm
//! clipping, Adam, epoch-level dev MAP early stopping and top-k
//! checkpoints.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::QaDataset;
use crate::error::{Error, Result};
use crate::layers::ParamStore;
use crate::metrics::{evaluate, Metrics};
use crate::model::{EncodedPair, Model};
use crate::pipeline::{run_from_scores, score_chunks, Ranker};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Probabilities are clamped to `[ε, 1 − ε]` before the logarithm.
pub const PROB_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub keep_top_k: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Threads used to score the dev set.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            l2_lambda: 1e-5,
            clip_norm: 1.0,
            batch_size: 256,
            max_epochs: 30,
            patience: 5,
            keep_top_k: 3,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            bad.push("learning_rate must be a finite non-negative number".to_string());
        }
        if !(self.l2_lambda >= 0.0) {
            bad.push("l2_lambda must be non-negative".into());
        }
        if !(self.clip_norm > 0.0) {
            bad.push("clip_norm must be positive".into());
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("keep_top_k", self.keep_top_k),
            ("workers", self.workers),
        ] {
            if v == 0 {
                bad.push(format!("{name} must be at least 1"));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            bad.push("Adam needs 0 <= beta < 1 and epsilon > 0".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

/// `−Σ [y log a + (1−y) log(1−a)] + λ Σ‖θ‖²` on the tape, where `a` is the
/// positive-class softmax probability of each `[B × 2]` logit row.
pub fn pointwise_loss<T: Scalar>(
    tape: &mut Tape<T>,
    logits: Var,
    labels: &[u8],
    params: &[Var],
    l2_lambda: f64,
) -> Result<Var> {
    let (rows, cols) = tape.value(logits).dims2()?;
    if cols != 2 || rows != labels.len() {
        return Err(Error::dim("pointwise_loss", &[labels.len(), 2], &[rows, cols]));
    }
    let mut target = Vec::with_capacity(2 * rows);
    for &y in labels {
        match y {
            0 => target.extend([T::one(), T::zero()]),
            1 => target.extend([T::zero(), T::one()]),
            _ => return Err(Error::Data(format!("label {y} is not 0 or 1"))),
        }
    }
    let probs = tape.softmax_rows(logits)?;
    let probs = tape.clamp(probs, PROB_EPSILON, 1.0 - PROB_EPSILON);
    let logp = tape.ln(probs);
    let target = tape.constant(Tensor::matrix(rows, 2, target)?);
    let picked = tape.mul(logp, target)?;
    let ce = tape.sum(picked);
    let mut loss = tape.scale(ce, -1.0);
    if l2_lambda != 0.0 && !params.is_empty() {
        let mut total: Option<Var> = None;
        for &p in params {
            let sq = tape.mul(p, p)?;
            let s = tape.sum(sq);
            total = Some(match total {
                Some(t) => tape.add(t, s)?,
                None => s,
            });
        }
        let reg = tape.scale(total.expect("non-empty"), l2_lambda);
        loss = tape.add(loss, reg)?;
    }
    Ok(loss)
}

/// Plain-value form of [`pointwise_loss`] for already computed
/// probabilities.
pub fn loss_value(probs: &[f64], labels: &[u8], params: &[&[f64]], l2_lambda: f64) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::dim("loss_value", &[labels.len()], &[probs.len()]));
    }
    let mut ce = 0.0;
    for (&a, &y) in probs.iter().zip(labels) {
        let a = a.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON);
        ce -= match y {
            1 => a.ln(),
            0 => (1.0 - a).ln(),
            _ => return Err(Error::Data(format!("label {y} is not 0 or 1"))),
        };
    }
    let l2: f64 = params.iter().flat_map(|p| p.iter()).map(|v| v * v).sum();
    Ok(ce + l2_lambda * l2)
}

/// Scales every gradient by `max_norm / g` when the global norm `g`
/// exceeds `max_norm`. Returns `g`.
pub fn clip_gradients<T: Scalar>(grads: &mut [Tensor<T>], max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        return Err(Error::Config(format!("clip norm must be positive, got {max_norm}")));
    }
    let norm = grads.iter().map(|g| g.squared_norm().as_f64()).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(Error::Numeric(format!("gradient norm is {norm}")));
    }
    if norm > max_norm {
        let s = T::of(max_norm / norm);
        for g in grads {
            for v in g.data_mut() {
                *v = *v * s;
            }
        }
    }
    Ok(norm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl From<&TrainConfig> for AdamConfig {
    fn from(c: &TrainConfig) -> Self {
        Self {
            learning_rate: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            epsilon: c.epsilon,
        }
    }
}

/// First and second moments per parameter plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut OptimizerState<T>,
    cfg: AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::dim("adam_step", &[params.len()], &[grads.len()]));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::dim("adam_step", p.shape(), g.shape()));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let c1 = T::of(1.0 - cfg.beta1.powi(t));
    let c2 = T::of(1.0 - cfg.beta2.powi(t));
    let (lr, eps, one) = (T::of(cfg.learning_rate), T::of(cfg.epsilon), T::one());
    for i in 0..params.len() {
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        let p = params[i].data_mut();
        for (j, &gj) in grads[i].data().iter().enumerate() {
            m[j] = b1 * m[j] + (one - b1) * gj;
            v[j] = b2 * v[j] + (one - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] = p[j] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Loss and per-parameter gradients (in [`ParamStore`] order) for a batch.
pub fn loss_and_gradients<T: Scalar>(
    model: &Model<T>,
    pairs: &[EncodedPair],
    labels: &[u8],
    l2_lambda: f64,
    dropout_mask: Option<Tensor<T>>,
) -> Result<(f64, Vec<Tensor<T>>)> {
    let mut tape = Tape::new();
    let params = model.params.bind(&mut tape);
    let mask = dropout_mask.map(|m| tape.constant(m));
    let logits = model.forward(&mut tape, &params, pairs, mask)?;
    let loss = pointwise_loss(&mut tape, logits, labels, &params, l2_lambda)?;
    let value = tape.value(loss).item()?.as_f64();
    let mut grads = tape.backward(loss)?;
    let grads = params
        .iter()
        .zip(model.params.tensors())
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    Ok((value, grads))
}

/// Inverted-dropout mask: each entry is `0` with probability `rate`,
/// otherwise `1/(1 − rate)`.
pub fn dropout_mask<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rate: f64) -> Tensor<T> {
    let keep = T::of(1.0 / (1.0 - rate));
    let data = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub dev_map: f64,
    pub dev_mrr: f64,
    pub dev_p_at_1: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct SavedCheckpoint<T> {
    pub epoch: usize,
    pub dev_map: f64,
    pub params: ParamStore<T>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    pub history: Vec<EpochRecord>,
    /// Best first.
    pub checkpoints: Vec<SavedCheckpoint<T>>,
    pub stopped_early: bool,
}

impl<T> TrainReport<T> {
    pub fn best(&self) -> Option<&SavedCheckpoint<T>> {
        self.checkpoints.first()
    }
}

/// Scores a dataset and computes ranking metrics.
pub fn evaluate_dataset<T: Scalar>(
    ranker: &Ranker<T>,
    dataset: &QaDataset,
    batch_size: usize,
    workers: usize,
) -> Result<Metrics> {
    evaluate(&ranker.rank_dataset(dataset, "eval", batch_size, workers)?)
}

fn checkpoint_name(epoch: usize) -> String {
    format!("checkpoint-epoch{epoch:03}.bin")
}

/// Trains `ranker` in place. On return the model holds the parameters of
/// the best dev-MAP epoch. With `out_dir`, the kept checkpoints and a
/// `train_log.jsonl` are written there.
pub fn train<T: Scalar>(
    ranker: &mut Ranker<T>,
    train_set: &QaDataset,
    dev_set: &QaDataset,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainReport<T>> {
    cfg.validate()?;
    if dev_set.groups_without_positive() == dev_set.groups().len() {
        return Err(Error::Config("dev set has no question with a positive answer".into()));
    }
    let mcfg = ranker.model.config.clone();
    let train_pairs = ranker.featurizer.encode_dataset(&mcfg, train_set);
    let train_labels: Vec<u8> = train_set.instances().iter().map(|i| i.label).collect();
    let dev_pairs = ranker.featurizer.encode_dataset(&mcfg, dev_set);

    let mut log = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let p = dir.join("train_log.jsonl");
            Some((fs::File::create(&p).map_err(|e| Error::io(&p, e))?, p))
        }
        None => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::new(ranker.model.params.tensors());
    let adam = AdamConfig::from(cfg);
    let width = ranker.model.dropout_width();
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut report = TrainReport {
        history: Vec::new(),
        checkpoints: Vec::new(),
        stopped_early: false,
    };
    let mut best_map = f64::NEG_INFINITY;
    let mut stale = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let pairs: Vec<EncodedPair> = chunk.iter().map(|&i| train_pairs[i].clone()).collect();
            let labels: Vec<u8> = chunk.iter().map(|&i| train_labels[i]).collect();
            let mask = (mcfg.dropout_rate > 0.0).then(|| dropout_mask(&mut rng, chunk.len(), width, mcfg.dropout_rate));
            let (loss, mut grads) = loss_and_gradients(&ranker.model, &pairs, &labels, cfg.l2_lambda, mask)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became {loss} at epoch {epoch}, batch {b}; try a smaller learning rate"
                )));
            }
            clip_gradients(&mut grads, cfg.clip_norm)
                .map_err(|e| Error::Numeric(format!("epoch {epoch}, batch {b}: {e}")))?;
            adam_step(ranker.model.params.tensors_mut(), &grads, &mut opt, adam)?;
            epoch_loss += loss;
        }

        let scores = score_chunks(&ranker.model, &dev_pairs, cfg.batch_size, cfg.workers)?;
        let dev = evaluate(&run_from_scores(dev_set, &scores, "dev")?)?;
        let record = EpochRecord {
            epoch,
            loss: epoch_loss,
            dev_map: dev.map,
            dev_mrr: dev.mrr,
            dev_p_at_1: dev.p_at_1,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        if let Some((f, p)) = log.as_mut() {
            writeln!(f, "{}", serde_json::to_string(&record)?).map_err(|e| Error::io(&*p, e))?;
        }
        report.history.push(record);

        keep_checkpoint(ranker, &mut report.checkpoints, epoch, dev.map, cfg.keep_top_k, out_dir)?;

        if dev.map > best_map {
            best_map = dev.map;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                report.stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    if let Some(best) = report.best() {
        ranker.model.params = best.params.clone();
    }
    Ok(report)
}

fn keep_checkpoint<T: Scalar>(
    ranker: &Ranker<T>,
    kept: &mut Vec<SavedCheckpoint<T>>,
    epoch: usize,
    dev_map: f64,
    top_k: usize,
    out_dir: Option<&Path>,
) -> Result<()> {
    // Only strictly better scores displace an existing entry.
    let qualifies = kept.len() < top_k || kept.last().is_some_and(|w| dev_map > w.dev_map);
    if !qualifies {
        return Ok(());
    }
    let path = match out_dir {
        Some(dir) => {
            let p = dir.join(checkpoint_name(epoch));
            ranker.save(&p, serde_json::json!({ "epoch": epoch, "dev_map": dev_map }))?;
            Some(p)
        }
        None => None,
    };
    kept.push(SavedCheckpoint {
        epoch,
        dev_map,
        params: ranker.model.params.clone(),
        path,
    });
    kept.sort_by(|a, b| b.dev_map.total_cmp(&a.dev_map).then(a.epoch.cmp(&b.epoch)));
    for dropped in kept.drain(top_k.min(kept.len())..) {
        if let Some(p) = dropped.path {
            fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(())
}
