//! Batching, the evaluation-driven training loop, early stopping and the
//! self-training data strategies.

mod batching;
mod fit;
mod report;
mod schedule;
mod strategy;
mod trainer;

pub use batching::{encode_pairs, make_batches};
pub use fit::{fit, TextConfig, TrainedModel};
pub use report::{read_report, write_report, ExperimentReport};
pub use schedule::{should_stop, TrainingSchedule};
pub use strategy::{prepare_strategy, Phase, Strategy};
pub use trainer::{evaluate, translate_sentences, train, DevSet, TrainOutcome};
