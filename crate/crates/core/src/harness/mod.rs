//! Toy language pairs, experiment configuration and the strategy-comparison
//! runner behind the command-line tool.

mod config;
mod experiment;
pub mod toy;

pub use config::{Arm, DataFiles, ExperimentConfig, OUTPUT_DIR_ENV};
pub use experiment::{emit_curves, load_data, run_experiment, ArmResult, ExperimentOutcome};
pub use toy::{gen_toy_corpus, ToyCorpora, ToyLanguage, ToyTask, ToyTaskSpec};
