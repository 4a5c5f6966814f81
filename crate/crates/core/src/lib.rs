// Negated float comparisons reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod bench;
pub mod bm25;
pub mod data;
pub mod error;
pub mod holo;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;
