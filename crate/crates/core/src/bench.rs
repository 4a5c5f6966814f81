//! Micro-benchmarks of the compositional operators over a range of widths.
//!
//! Each operator is timed on a single pair of `d`-vectors. The tensor-slice
//! product reuses one square tile of at most [`MAX_TILE`] per side so large
//! widths fit in memory; the multiply-add count is still `d²k`, and the tile
//! is big enough to stay out of cache.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::holo::{circular_correlation, CompositionBackend};

/// Largest side of the materialized tensor-slice tile (128 MiB in f64).
pub const MAX_TILE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    FftCorrelation,
    DirectCorrelation,
    TensorSlices,
    ConcatDense,
}

impl Operator {
    pub const ALL: [Operator; 4] = [
        Operator::FftCorrelation,
        Operator::DirectCorrelation,
        Operator::TensorSlices,
        Operator::ConcatDense,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Operator::FftCorrelation => "correlation_fft",
            Operator::DirectCorrelation => "correlation_direct",
            Operator::TensorSlices => "tensor_slices",
            Operator::ConcatDense => "concat_dense",
        }
    }

    /// Head parameters of the architecture that uses this operator.
    pub fn parameters(self, d: usize, h: usize, k: usize) -> usize {
        match self {
            Operator::FftCorrelation | Operator::DirectCorrelation => holographic_head_parameters(d, h),
            Operator::TensorSlices => ntn_head_parameters(d, k),
            Operator::ConcatDense => concat_head_parameters(d, h),
        }
    }
}

/// `d·h + h + 2h + 2`: correlation keeps width `d`.
pub fn holographic_head_parameters(d: usize, h: usize) -> usize {
    d * h + h + 2 * h + 2
}

/// `2d·h + h + 2h + 2`.
pub fn concat_head_parameters(d: usize, h: usize) -> usize {
    2 * d * h + h + 2 * h + 2
}

/// `d²k + 2dk + k` for the tensor layer, `2k + 2` for the output map.
pub fn ntn_head_parameters(d: usize, k: usize) -> usize {
    d * d * k + 2 * d * k + k + 2 * k + 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    pub slices: usize,
    pub hidden: usize,
    pub repetitions: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dims: (8..=14).map(|p| 1usize << p).collect(),
            slices: 5,
            hidden: 64,
            repetitions: 30,
            warmup: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub operator: Operator,
    pub d: usize,
    pub params: usize,
    pub median_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn rows_for(&self, op: Operator) -> impl Iterator<Item = &BenchRow> {
        self.rows.iter().filter(move |r| r.operator == op)
    }

    /// Least-squares slope of `ln(median_ns)` against `ln(d)`.
    pub fn slope(&self, op: Operator) -> Result<f64> {
        let pts: Vec<(f64, f64)> = self.rows_for(op).map(|r| (r.d as f64, r.median_ns)).collect();
        loglog_slope(&pts)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<20} {:>7} {:>14} {:>16}\n", "operator", "d", "params", "median_ns");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<20} {:>7} {:>14} {:>16.0}",
                r.operator.name(),
                r.d,
                r.params,
                r.median_ns
            );
        }
        if self.config.dims.len() >= 2 {
            for op in Operator::ALL {
                if let Ok(s) = self.slope(op) {
                    let _ = writeln!(out, "slope {:<14} {s:>19.3}", op.name());
                }
            }
        }
        out
    }
}

pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Contract("slope needs at least two points".into()));
    }
    if points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(Error::Contract("slope needs positive coordinates".into()));
    }
    let n = points.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Contract("slope needs at least two distinct widths".into()));
    }
    Ok(sxy / sxx)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn time(warmup: usize, reps: usize, mut f: impl FnMut()) -> f64 {
    for _ in 0..warmup {
        f();
    }
    median(
        (0..reps)
            .map(|_| {
                let t = Instant::now();
                f();
                t.elapsed().as_nanos() as f64
            })
            .collect(),
    )
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `qᵀ M a` with `M` tiled from a `t×t` block.
fn bilinear_tiled(q: &[f64], tile: &[f64], t: usize, a: &[f64]) -> f64 {
    let mut acc = 0.0;
    for qblock in q.chunks(t) {
        for (r, &qr) in qblock.iter().enumerate() {
            let row = &tile[r * t..(r + 1) * t];
            let s: f64 = a.chunks(t).map(|ab| dot(row, ab)).sum();
            acc += qr * s;
        }
    }
    acc
}

struct Workload {
    q: Vec<f64>,
    a: Vec<f64>,
    tile: Vec<f64>,
    t: usize,
    v: Vec<f64>,
    w_h: Vec<f64>,
    w_out: Vec<f64>,
}

impl Workload {
    fn new(rng: &mut ChaCha8Rng, d: usize, h: usize, k: usize) -> Self {
        let t = d.min(MAX_TILE);
        Self {
            q: uniform(rng, d),
            a: uniform(rng, d),
            tile: uniform(rng, t * t),
            t,
            v: uniform(rng, 2 * d * k),
            w_h: uniform(rng, 2 * d * h),
            w_out: uniform(rng, h.max(k) * 2),
        }
    }

    fn tensor_slices(&self, k: usize) -> [f64; 2] {
        let d = self.q.len();
        let mut z = vec![0.0; k];
        for (s, zs) in z.iter_mut().enumerate() {
            let bil = bilinear_tiled(&self.q, black_box(&self.tile), self.t, &self.a);
            let col = &self.v[s * 2 * d..(s + 1) * 2 * d];
            *zs = (bil + dot(&col[..d], &self.q) + dot(&col[d..], &self.a)).tanh();
        }
        [dot(&z, &self.w_out[..k]), dot(&z, &self.w_out[k..2 * k])]
    }

    fn concat_dense(&self, h: usize) -> [f64; 2] {
        let d = self.q.len();
        let x: Vec<f64> = self.q.iter().chain(&self.a).copied().collect();
        let hidden: Vec<f64> = (0..h)
            .map(|j| dot(&x, &self.w_h[j * 2 * d..(j + 1) * 2 * d]).tanh())
            .collect();
        [dot(&hidden, &self.w_out[..h]), dot(&hidden, &self.w_out[h..2 * h])]
    }
}

/// Times every operator at every width and reports medians in nanoseconds.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    if config.dims.is_empty() || config.dims.contains(&0) {
        return Err(Error::Config("bench needs a non-empty list of positive dims".into()));
    }
    if config.repetitions == 0 || config.slices == 0 || config.hidden == 0 {
        return Err(Error::Config("repetitions, slices and hidden must be positive".into()));
    }
    let (k, h) = (config.slices, config.hidden);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rows = Vec::new();
    for &d in &config.dims {
        let w = Workload::new(&mut rng, d, h, k);
        for op in Operator::ALL {
            let (warm, reps) = (config.warmup, config.repetitions);
            let median_ns = match op {
                Operator::FftCorrelation => time(warm, reps, || {
                    black_box(circular_correlation(black_box(&w.q), &w.a, CompositionBackend::Fft).ok());
                }),
                Operator::DirectCorrelation => time(warm, reps, || {
                    black_box(circular_correlation(black_box(&w.q), &w.a, CompositionBackend::DirectSum).ok());
                }),
                Operator::TensorSlices => time(warm, reps, || {
                    black_box(w.tensor_slices(k));
                }),
                Operator::ConcatDense => time(warm, reps, || {
                    black_box(w.concat_dense(h));
                }),
            };
            rows.push(BenchRow {
                operator: op,
                d,
                params: op.parameters(d, h, k),
                median_ns,
            });
        }
    }
    Ok(BenchReport {
        config: config.clone(),
        rows,
    })
}
