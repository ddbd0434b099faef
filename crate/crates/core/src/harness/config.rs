//! Experiment configuration files.
//!
//! TOML with these tables (every key optional):
//! ```toml
//! output_dir = "runs/toy"
//! arms = ["baseline", "mix", "tagged", "forward_synth_a", "forward_synth_b"]
//!
//! [toy]                     # generated data; alternative to [data]
//! task = "reverse_map"      # reverse_map | copy | shift_map
//! vocab_size = 200
//! min_len = 3
//! max_len = 8
//! zipf_exponent = 1.0
//! train = 2000
//! dev = 200
//! test = 500
//! monolingual = 8000
//! seed = 1
//!
//! [data]                    # corpus files, relative to the config file
//! train_src = "train.en"
//! train_tgt = "train.de"
//! dev_src = "dev.en"
//! dev_tgt = "dev.de"
//! test_src = "test.en"      # optional pair
//! test_tgt = "test.de"
//! monolingual = "mono.de"
//!
//! [pipeline]
//! strategy_backward = "mix"
//! strategy_forward = "mix"
//! average_k = 8
//! # average_end_step = 2800
//!
//! [pipeline.model]          # hidden_size, num_layers, dropout, learning_rate,
//!                           # batch_size, max_decode_length, input_feeding,
//!                           # clip_norm, seed
//! [pipeline.text]           # bpe_merges, max_vocab
//! [pipeline.backward_schedule]   # eval_interval_steps, max_steps,
//! [pipeline.self_train_schedule] # patience_evals, min_improvement_bleu,
//! [pipeline.forward_schedule]    # min_steps, checkpoint_keep,
//!                                # retain_moments, seed
//! ```
//! The output directory may be overridden by the `SELFTRAIN_OUTPUT_DIR`
//! environment variable; nothing else reads the environment.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::toy::ToyTaskSpec;
use crate::pipeline::PipelineConfig;
use crate::training::Strategy;
use crate::{Error, Result};

pub const OUTPUT_DIR_ENV: &str = "SELFTRAIN_OUTPUT_DIR";

/// One row of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Arm {
    /// Backward model on authentic data.
    Baseline,
    /// Backward model self-trained with a strategy.
    SelfTrain(Strategy),
    /// Forward model on authentic data only.
    ForwardAuthentic,
    /// Forward model back-translated with the baseline backward model.
    ForwardSynthA,
    /// Forward model back-translated with the self-trained backward model.
    ForwardSynthB,
}

impl Arm {
    pub fn name(self) -> String {
        match self {
            Arm::Baseline => "baseline".into(),
            Arm::SelfTrain(s) => s.name().into(),
            Arm::ForwardAuthentic => "forward_authentic".into(),
            Arm::ForwardSynthA => "forward_synth_a".into(),
            Arm::ForwardSynthB => "forward_synth_b".into(),
        }
    }

    pub fn is_forward(self) -> bool {
        matches!(self, Arm::ForwardAuthentic | Arm::ForwardSynthA | Arm::ForwardSynthB)
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "baseline" => Ok(Arm::Baseline),
            "forward_authentic" => Ok(Arm::ForwardAuthentic),
            "forward_synth_a" => Ok(Arm::ForwardSynthA),
            "forward_synth_b" => Ok(Arm::ForwardSynthB),
            other => other
                .parse()
                .map(Arm::SelfTrain)
                .map_err(|_| Error::config(format!("unknown arm {s:?}"))),
        }
    }
}

impl TryFrom<String> for Arm {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Arm> for String {
    fn from(a: Arm) -> String {
        a.name()
    }
}

/// Corpus file locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFiles {
    pub train_src: PathBuf,
    pub train_tgt: PathBuf,
    pub dev_src: PathBuf,
    pub dev_tgt: PathBuf,
    pub test_src: Option<PathBuf>,
    pub test_tgt: Option<PathBuf>,
    pub monolingual: PathBuf,
}

impl DataFiles {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.train_src,
            &mut self.train_tgt,
            &mut self.dev_src,
            &mut self.dev_tgt,
            &mut self.monolingual,
        ] {
            fix(p);
        }
        for p in [&mut self.test_src, &mut self.test_tgt].into_iter().flatten() {
            fix(p);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub arms: Vec<Arm>,
    /// Absent unless the file has a `[toy]` table.
    #[serde(default)]
    pub toy: Option<ToyTaskSpec>,
    pub data: Option<DataFiles>,
    pub pipeline: PipelineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            output_dir: PathBuf::from("runs/experiment"),
            arms: vec![
                Arm::Baseline,
                Arm::SelfTrain(Strategy::Mix),
                Arm::SelfTrain(Strategy::Tagged),
                Arm::SelfTrain(Strategy::PretrainSynthThenAuth),
                Arm::SelfTrain(Strategy::PretrainAuthThenSynth),
                Arm::ForwardSynthA,
                Arm::ForwardSynthB,
            ],
            toy: Some(ToyTaskSpec::default()),
            data: None,
            pipeline: PipelineConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Reads a configuration file, resolving data paths against its
    /// directory and applying the output-directory override.
    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(data) = &mut config.data {
            data.resolve(base);
        }
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            config.output_dir = PathBuf::from(dir);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.toy, &self.data) {
            (Some(_), Some(_)) => return Err(Error::config("give either [toy] or [data], not both")),
            (None, None) => return Err(Error::config("no data: add a [toy] or [data] table")),
            _ => {}
        }
        if self.arms.is_empty() {
            return Err(Error::config("no arms to run"));
        }
        if let Some(d) = &self.data {
            if d.test_src.is_some() != d.test_tgt.is_some() {
                return Err(Error::config("test_src and test_tgt must be given together"));
            }
        }
        self.pipeline.validate()
    }

    /// Replaces every seed (data, initialization, schedules) with `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let Some(toy) = &mut self.toy {
            toy.seed = seed;
        }
        let p = &mut self.pipeline;
        p.model.seed = seed;
        for s in [&mut p.backward_schedule, &mut p.self_train_schedule, &mut p.forward_schedule] {
            s.seed = seed;
        }
        self
    }
}
