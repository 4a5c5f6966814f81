//! Network building blocks: frozen embedding lookup, stacked LSTM encoder,
//! and the comparison heads.

pub mod embedding;
pub mod heads;
pub mod lstm;
pub mod params;

pub use embedding::EmbeddingTable;
pub use heads::{
    bilinear_similarity, softmax2, Activation, Composition, DenseHead, HeadExtras, NtnHead, OVERLAP_FEATURES,
};
pub use lstm::{layer_parameter_count, Lstm, LstmOutput};
pub use params::{Init, ParamId, ParamStore};
