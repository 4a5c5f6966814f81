//! The three ranking architectures behind one scoring interface.
//!
//! Every model embeds question and answer ids with a frozen table, runs a
//! separate stacked LSTM over each side, and compares the two final hidden
//! states with a head:
//!
//! | architecture | head |
//! |---|---|
//! | `HdLstm` | circular correlation + dense layer |
//! | `NtnLstm` | neural tensor layer |
//! | `ConcatLstm` | concatenation + dense layer |

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::OVERLAP_DIM;
use crate::error::{Error, Result};
use crate::holo::CompositionBackend;
use crate::layers::{Activation, Composition, DenseHead, EmbeddingTable, HeadExtras, Init, Lstm, NtnHead, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    HdLstm,
    NtnLstm,
    ConcatLstm,
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "hdlstm" => Ok(Self::HdLstm),
            "ntnlstm" => Ok(Self::NtnLstm),
            "concatlstm" | "lstm" => Ok(Self::ConcatLstm),
            _ => Err(Error::Config(format!(
                "unknown architecture '{s}' (expected hdlstm, ntnlstm or concatlstm)"
            ))),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::HdLstm => "hdlstm",
            Self::NtnLstm => "ntnlstm",
            Self::ConcatLstm => "concatlstm",
        })
    }
}

pub const DEFAULT_HIDDEN_DIM: usize = 64;
pub const DEFAULT_NTN_SLICES: usize = 5;

/// Network shape. `hidden_dim` only applies to the dense heads and
/// `ntn_slices` only to the tensor head; leaving either unset picks the
/// default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub embed_dim: usize,
    pub lstm_dim: usize,
    pub lstm_layers: usize,
    pub hidden_dim: Option<usize>,
    pub ntn_slices: Option<usize>,
    pub use_bilinear_sim: bool,
    pub use_overlap_feats: bool,
    pub max_len_q: usize,
    pub max_len_a: usize,
    pub dropout_rate: f64,
    pub seed: u64,
    pub activation: Activation,
    pub backend: CompositionBackend,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::HdLstm,
            embed_dim: 50,
            lstm_dim: 640,
            lstm_layers: 2,
            hidden_dim: None,
            ntn_slices: None,
            use_bilinear_sim: true,
            use_overlap_feats: true,
            max_len_q: 11,
            max_len_a: 38,
            dropout_rate: 0.5,
            seed: 0,
            activation: Activation::Tanh,
            backend: CompositionBackend::Fft,
        }
    }
}

impl ModelConfig {
    pub fn hidden(&self) -> usize {
        self.hidden_dim.unwrap_or(DEFAULT_HIDDEN_DIM)
    }

    pub fn slices(&self) -> usize {
        self.ntn_slices.unwrap_or(DEFAULT_NTN_SLICES)
    }

    pub fn extras(&self) -> HeadExtras {
        HeadExtras {
            bilinear_similarity: self.use_bilinear_sim,
            overlap_features: self.use_overlap_feats,
        }
    }

    /// Errors on impossible settings; returns warnings for ignored ones.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("lstm_dim", self.lstm_dim),
            ("lstm_layers", self.lstm_layers),
            ("max_len_q", self.max_len_q),
            ("max_len_a", self.max_len_a),
            ("hidden_dim", self.hidden()),
            ("ntn_slices", self.slices()),
        ] {
            if v == 0 {
                bad.push(format!("{name} must be at least 1"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            bad.push(format!("dropout_rate must be in [0, 1), got {}", self.dropout_rate));
        }
        if !bad.is_empty() {
            return Err(Error::Config(bad.join("; ")));
        }
        let mut warnings = Vec::new();
        match self.architecture {
            Architecture::NtnLstm if self.hidden_dim.is_some() => {
                warnings.push("hidden_dim is ignored by the ntnlstm architecture".to_string())
            }
            Architecture::HdLstm | Architecture::ConcatLstm if self.ntn_slices.is_some() => warnings.push(format!(
                "ntn_slices is ignored by the {} architecture",
                self.architecture
            )),
            _ => {}
        }
        Ok(warnings)
    }
}

/// One question/answer pair as padded id sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPair {
    pub question: Vec<u32>,
    pub answer: Vec<u32>,
    pub features: Option<[f64; OVERLAP_DIM]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterBreakdown {
    pub embedding: usize,
    pub q_lstm: usize,
    pub a_lstm: usize,
    pub head: usize,
    pub total: usize,
}

impl ParameterBreakdown {
    /// Parameters updated by training (everything but the embedding table).
    pub fn trainable(&self) -> usize {
        self.total - self.embedding
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Dense(DenseHead),
    Ntn(NtnHead),
}

impl Head {
    pub fn parameter_count(&self) -> usize {
        match self {
            Head::Dense(h) => h.parameter_count(),
            Head::Ntn(h) => h.parameter_count(),
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            Head::Dense(h) => h.input_width(),
            Head::Ntn(h) => h.input_width(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub embeddings: EmbeddingTable<T>,
    pub params: ParamStore<T>,
    pub q_lstm: Lstm,
    pub a_lstm: Lstm,
    pub head: Head,
    /// Messages about ignored configuration fields.
    pub warnings: Vec<String>,
}

pub const Q_PREFIX: &str = "q_lstm";
pub const A_PREFIX: &str = "a_lstm";
pub const HEAD_PREFIX: &str = "head";

/// Builds a freshly initialized model; parameters depend only on `config`.
pub fn build_model<T: Scalar>(config: ModelConfig, embeddings: EmbeddingTable<T>) -> Result<Model<T>> {
    let warnings = config.validate()?;
    if embeddings.dim() != config.embed_dim {
        return Err(Error::Config(format!(
            "embedding table has dimension {}, configuration expects {}",
            embeddings.dim(),
            config.embed_dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut init = Init { rng: &mut rng };
    let mut params = ParamStore::new();
    let (n, d) = (config.embed_dim, config.lstm_dim);
    let q_lstm = Lstm::new(&mut params, Q_PREFIX, n, d, config.lstm_layers, &mut init)?;
    let a_lstm = Lstm::new(&mut params, A_PREFIX, n, d, config.lstm_layers, &mut init)?;
    let head = match config.architecture {
        Architecture::HdLstm | Architecture::ConcatLstm => {
            let composition = if config.architecture == Architecture::HdLstm {
                Composition::Correlation(config.backend)
            } else {
                Composition::Concatenation
            };
            Head::Dense(DenseHead::new(
                &mut params,
                HEAD_PREFIX,
                d,
                config.hidden(),
                composition,
                config.extras(),
                config.activation,
                &mut init,
            )?)
        }
        Architecture::NtnLstm => Head::Ntn(NtnHead::new(
            &mut params,
            HEAD_PREFIX,
            d,
            config.slices(),
            config.extras(),
            &mut init,
        )?),
    };
    Ok(Model {
        config,
        embeddings,
        params,
        q_lstm,
        a_lstm,
        head,
        warnings,
    })
}

impl<T: Scalar> Model<T> {
    pub fn count_parameters(&self) -> ParameterBreakdown {
        let embedding = self.embeddings.matrix().len();
        let q_lstm = self.q_lstm.parameter_count();
        let a_lstm = self.a_lstm.parameter_count();
        let head = self.head.parameter_count();
        ParameterBreakdown {
            embedding,
            q_lstm,
            a_lstm,
            head,
            total: embedding + q_lstm + a_lstm + head,
        }
    }

    /// Width of the dropout mask expected by [`Model::forward`].
    pub fn dropout_width(&self) -> usize {
        self.head.input_width()
    }

    fn check_pair(&self, i: usize, p: &EncodedPair) -> Result<()> {
        let c = &self.config;
        if p.question.len() != c.max_len_q || p.answer.len() != c.max_len_a {
            return Err(Error::Contract(format!(
                "pair {i}: sequences must be padded to {}/{}, got {}/{}",
                c.max_len_q,
                c.max_len_a,
                p.question.len(),
                p.answer.len()
            )));
        }
        match (c.use_overlap_feats, p.features.is_some()) {
            (true, false) => Err(Error::Config(format!("pair {i}: model needs overlap features"))),
            (false, true) => Err(Error::Config(format!(
                "pair {i}: model was built without overlap features"
            ))),
            _ => Ok(()),
        }
    }

    fn encode_side(&self, tape: &mut Tape<T>, params: &[Var], lstm: &Lstm, seqs: &[Vec<u32>]) -> Result<Var> {
        let len = seqs[0].len();
        let steps = (0..len)
            .map(|t| Ok(tape.constant(self.embeddings.embed_step(seqs, t)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(lstm.forward(tape, params, &steps)?.last)
    }

    /// Class logits `[B × 2]` for a batch. `params` comes from binding
    /// [`Model::params`] onto `tape`.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        params: &[Var],
        pairs: &[EncodedPair],
        dropout_mask: Option<Var>,
    ) -> Result<Var> {
        if pairs.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        for (i, p) in pairs.iter().enumerate() {
            self.check_pair(i, p)?;
        }
        let qs: Vec<Vec<u32>> = pairs.iter().map(|p| p.question.clone()).collect();
        let as_: Vec<Vec<u32>> = pairs.iter().map(|p| p.answer.clone()).collect();
        let q = self.encode_side(tape, params, &self.q_lstm, &qs)?;
        let a = self.encode_side(tape, params, &self.a_lstm, &as_)?;
        let features = if self.config.use_overlap_feats {
            let data = pairs
                .iter()
                .flat_map(|p| p.features.expect("checked").map(T::of))
                .collect();
            Some(tape.constant(Tensor::matrix(pairs.len(), OVERLAP_DIM, data)?))
        } else {
            None
        };
        match &self.head {
            Head::Dense(h) => h.forward(tape, params, q, a, features, dropout_mask),
            Head::Ntn(h) => h.forward(tape, params, q, a, features, dropout_mask),
        }
    }

    /// Probability of the positive class for every pair, without dropout.
    pub fn score_pairs(&self, pairs: &[EncodedPair]) -> Result<Vec<T>> {
        let mut tape = Tape::new();
        let params = self.params.bind_frozen(&mut tape);
        let logits = self.forward(&mut tape, &params, pairs, None)?;
        let probs = tape.softmax_rows(logits)?;
        let p = tape.value(probs);
        Ok((0..pairs.len()).map(|i| p.get2(i, 1)).collect())
    }

    pub fn score_pair(&self, pair: &EncodedPair) -> Result<T> {
        Ok(self.score_pairs(std::slice::from_ref(pair))?[0])
    }

    /// Converts to another precision, keeping configuration and layout.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let mut params = ParamStore::new();
        for (name, t) in self.params.iter() {
            params.add(name, t.cast());
        }
        Model {
            config: self.config.clone(),
            embeddings: self.embeddings.cast(),
            params,
            q_lstm: self.q_lstm.clone(),
            a_lstm: self.a_lstm.clone(),
            head: self.head.clone(),
            warnings: self.warnings.clone(),
        }
    }
}
