//! Self-training enhanced back-translation for low-resource neural machine
//! translation.
//!
//! The crate bundles everything a desk-scale experiment needs: a recurrent
//! encoder-decoder translator with hand-written gradients ([`model`]), BPE
//! segmentation and corpus handling ([`text`]), BLEU ([`metrics`]), the
//! evaluation-driven training loop and data strategies ([`training`]), the
//! backward/forward pipeline ([`pipeline`]) and the toy-data experiment
//! harness ([`harness`]).

pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod text;
pub mod training;

pub use error::{Error, Result};
