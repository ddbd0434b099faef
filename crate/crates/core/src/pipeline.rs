//! The self-training back-translation pipeline:
//!
//! 1. train the backward (target to source) model on authentic pairs;
//! 2. back-translate the monolingual target sentences with it (synth A);
//! 3. retrain the backward model on authentic pairs plus synth A;
//! 4. back-translate the monolingual sentences again with the improved
//!    backward model (synth B);
//! 5. train the forward model on authentic pairs plus synth B.
//!
//! Every corpus handed to this module is oriented source to target; the
//! backward stages swap sides internally. Synthetic pairs are stored as
//! (machine-generated source, authentic target).
//!
//! Run directory layout, one subdirectory per stage:
//! ```text
//! stage-1/  model.ckpt src.bpe tgt.bpe report.tsv done
//! stage-2/  synth.src synth.tgt skipped done
//! stage-3/  model.ckpt src.bpe tgt.bpe report.tsv done
//! stage-4/  synth.src synth.tgt skipped done
//! stage-5/  model.ckpt src.bpe tgt.bpe report.tsv done
//! manifest  one "<sha256>  <relative path>" line per file
//! ```
//! A stage whose `done` marker exists is loaded instead of recomputed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{load_checkpoint, save_checkpoint, AveragingWindow, Checkpoint, ModelConfig};
use crate::text::{
    load_corpus, save_corpus, BpeModel, Direction, MonolingualCorpus, Origin, ParallelCorpus,
    SentencePair,
};
use crate::training::{
    evaluate, fit, prepare_strategy, read_report, translate_sentences, write_report, DevSet,
    ExperimentReport, Strategy, TextConfig, TrainedModel, TrainingSchedule,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Self-training strategy of the backward model.
    pub strategy_backward: Strategy,
    /// Back-translation strategy of the forward model.
    pub strategy_forward: Strategy,
    pub average_k: usize,
    /// Average the `average_k` snapshots ending at this step instead of the
    /// latest ones.
    pub average_end_step: Option<u64>,
    pub model: ModelConfig,
    pub text: TextConfig,
    pub backward_schedule: TrainingSchedule,
    pub self_train_schedule: TrainingSchedule,
    pub forward_schedule: TrainingSchedule,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            strategy_backward: Strategy::Mix,
            strategy_forward: Strategy::Mix,
            average_k: 8,
            average_end_step: None,
            model: ModelConfig::default(),
            text: TextConfig::default(),
            backward_schedule: TrainingSchedule::default(),
            self_train_schedule: TrainingSchedule::default(),
            forward_schedule: TrainingSchedule::default(),
        }
    }
}

impl PipelineConfig {
    pub fn window(&self) -> AveragingWindow {
        match self.average_end_step {
            Some(step) => AveragingWindow::EndingAt {
                step,
                k: self.average_k,
            },
            None => AveragingWindow::LastK(self.average_k),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.average_k == 0 {
            return Err(Error::config("average_k must be at least 1"));
        }
        for s in [&self.backward_schedule, &self.self_train_schedule, &self.forward_schedule] {
            s.validate()?;
        }
        Ok(())
    }
}

/// Corpora of one language pair, all oriented source to target.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineData {
    pub train: ParallelCorpus,
    pub dev: ParallelCorpus,
    pub test: Option<ParallelCorpus>,
    /// Target-language sentences.
    pub monolingual: MonolingualCorpus,
}

/// A trained model reduced to what later stages need.
#[derive(Debug, Clone, PartialEq)]
pub struct StageModel {
    /// The averaged checkpoint.
    pub checkpoint: Checkpoint,
    pub src_bpe: BpeModel,
    pub tgt_bpe: BpeModel,
    pub report: ExperimentReport,
}

impl From<TrainedModel> for StageModel {
    fn from(t: TrainedModel) -> Self {
        StageModel {
            checkpoint: t.averaged,
            src_bpe: t.src_bpe,
            tgt_bpe: t.tgt_bpe,
            report: t.report,
        }
    }
}

impl StageModel {
    /// Corpus BLEU on `corpus`, oriented like the model.
    pub fn evaluate(&self, corpus: &ParallelCorpus) -> Result<f64> {
        evaluate(&self.checkpoint, &DevSet::new(corpus, &self.src_bpe, &self.checkpoint))
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_checkpoint(&self.checkpoint, dir.join("model.ckpt"))?;
        self.src_bpe.save(dir.join("src.bpe"))?;
        self.tgt_bpe.save(dir.join("tgt.bpe"))?;
        write_report(&self.report, dir.join("report.tsv"))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<StageModel> {
        let dir = dir.as_ref();
        Ok(StageModel {
            checkpoint: load_checkpoint(dir.join("model.ckpt"))?,
            src_bpe: BpeModel::load(dir.join("src.bpe"))?,
            tgt_bpe: BpeModel::load(dir.join("tgt.bpe"))?,
            report: read_report(dir.join("report.tsv"))?,
        })
    }
}

/// Back-translated pairs and the number of monolingual sentences dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub corpus: ParallelCorpus,
    pub skipped: usize,
}

impl SyntheticCorpus {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_corpus(&self.corpus, dir.join("synth.src"), dir.join("synth.tgt"))?;
        let path = dir.join("skipped");
        fs::write(&path, format!("{}\n", self.skipped)).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<SyntheticCorpus> {
        let dir = dir.as_ref();
        let corpus = load_corpus(dir.join("synth.src"), dir.join("synth.tgt"), Origin::Synthetic)?;
        let path = dir.join("skipped");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let skipped = text
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad skip count in {}", path.display())))?;
        Ok(SyntheticCorpus { corpus, skipped })
    }
}

fn with_test(mut model: StageModel, test: Option<&ParallelCorpus>) -> Result<StageModel> {
    if let Some(test) = test {
        model.report.test_bleu = Some(model.evaluate(test)?);
    }
    Ok(model)
}

fn empty_corpus() -> ParallelCorpus {
    ParallelCorpus::new(Vec::new()).expect("empty corpus is valid")
}

/// Trains the target-to-source model on authentic pairs.
pub fn train_backward(
    parallel: &ParallelCorpus,
    dev: &ParallelCorpus,
    test: Option<&ParallelCorpus>,
    config: &PipelineConfig,
) -> Result<StageModel> {
    let train = parallel.oriented(Direction::Backward);
    let schedule = &config.backward_schedule;
    let phases = prepare_strategy(&train, &empty_corpus(), Strategy::Mix, Direction::Backward, schedule.seed)?;
    let model = fit(
        "backward_baseline",
        &phases,
        &dev.oriented(Direction::Backward),
        &config.model,
        schedule,
        &config.text,
        config.window(),
    )?;
    let test = test.map(|t| t.oriented(Direction::Backward));
    with_test(model.into(), test.as_ref())
}

/// Back-translates every monolingual target sentence with a backward model.
/// Output order follows the input; sentences that fail to decode or decode
/// to nothing are skipped, and more than 1% skipped is an error.
pub fn generate_synthetic(backward: &StageModel, monolingual: &MonolingualCorpus) -> Result<SyntheticCorpus> {
    if monolingual.is_empty() {
        return Err(Error::EmptyCorpus("monolingual corpus".into()));
    }
    let outputs = translate_sentences(&backward.checkpoint, &backward.src_bpe, monolingual.sentences());
    let mut pairs = Vec::with_capacity(monolingual.len());
    let mut skipped = 0;
    for (y, x) in monolingual.sentences().iter().zip(outputs) {
        match x.and_then(|x| SentencePair::new(x, y.clone(), Origin::Synthetic)) {
            Ok(pair) => pairs.push(pair),
            Err(_) => skipped += 1,
        }
    }
    let total = monolingual.len();
    if skipped * 100 > total {
        return Err(Error::TooManySkipped { skipped, total });
    }
    Ok(SyntheticCorpus {
        corpus: ParallelCorpus::new(pairs)?,
        skipped,
    })
}

/// Trains a fresh backward model on authentic plus synthetic pairs.
pub fn self_train(
    authentic: &ParallelCorpus,
    synthetic: &ParallelCorpus,
    strategy: Strategy,
    dev: &ParallelCorpus,
    test: Option<&ParallelCorpus>,
    config: &PipelineConfig,
) -> Result<StageModel> {
    let schedule = &config.self_train_schedule;
    let phases = prepare_strategy(
        &authentic.oriented(Direction::Backward),
        &synthetic.oriented(Direction::Backward),
        strategy,
        Direction::Backward,
        schedule.seed,
    )?;
    let model = fit(
        &format!("backward_{strategy}"),
        &phases,
        &dev.oriented(Direction::Backward),
        &config.model,
        schedule,
        &config.text,
        config.window(),
    )?;
    let test = test.map(|t| t.oriented(Direction::Backward));
    with_test(model.into(), test.as_ref())
}

/// Trains the source-to-target model on authentic plus back-translated pairs.
pub fn train_forward(
    authentic: &ParallelCorpus,
    synthetic: &ParallelCorpus,
    strategy: Strategy,
    dev: &ParallelCorpus,
    test: Option<&ParallelCorpus>,
    label: &str,
    config: &PipelineConfig,
) -> Result<StageModel> {
    let schedule = &config.forward_schedule;
    let phases = prepare_strategy(authentic, synthetic, strategy, Direction::Forward, schedule.seed)?;
    let model = fit(label, &phases, dev, &config.model, schedule, &config.text, config.window())?;
    with_test(model.into(), test)
}

/// Everything the pipeline produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StageArtifacts {
    pub backward_baseline: StageModel,
    pub synth_a: SyntheticCorpus,
    pub backward_improved: StageModel,
    pub synth_b: SyntheticCorpus,
    pub forward_model: StageModel,
}

impl StageArtifacts {
    pub fn reports(&self) -> Vec<&ExperimentReport> {
        vec![
            &self.backward_baseline.report,
            &self.backward_improved.report,
            &self.forward_model.report,
        ]
    }
}

/// Loads a finished stage or runs, persists and marks it; errors carry the
/// stage name.
fn stage<T>(
    run_dir: &Path,
    n: usize,
    name: &str,
    load: impl Fn(&Path) -> Result<T>,
    save: impl Fn(&T, &Path) -> Result<()>,
    run: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let dir = run_dir.join(format!("stage-{n}"));
    let marker = dir.join("done");
    let label = format!("stage-{n} ({name})");
    if marker.exists() {
        log::info!("{label}: reusing {}", dir.display());
        return load(&dir).map_err(|e| Error::stage(&label, e));
    }
    log::info!("{label}: running");
    let value = run().map_err(|e| Error::stage(&label, e))?;
    let persist = || -> Result<()> {
        save(&value, &dir)?;
        fs::write(&marker, "").map_err(|e| Error::io(&marker, e))?;
        write_manifest(run_dir)
    };
    persist().map_err(|e| Error::stage(&label, e))?;
    Ok(value)
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path != root.join("manifest") {
            out.push(path);
        }
    }
    Ok(())
}

/// Rewrites `<run_dir>/manifest` with the SHA-256 of every artifact.
pub fn write_manifest(run_dir: &Path) -> Result<()> {
    let mut files = Vec::new();
    collect_files(run_dir, run_dir, &mut files)?;
    let mut text = String::new();
    for path in files {
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let rel = path.strip_prefix(run_dir).unwrap_or(&path);
        text.push_str(&format!("{}  {}\n", hex::encode(Sha256::digest(&bytes)), rel.display()));
    }
    let path = run_dir.join("manifest");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Runs all five stages, persisting artifacts under `run_dir` and resuming
/// from completed stages.
pub fn run_full_pipeline(data: &PipelineData, config: &PipelineConfig, run_dir: impl AsRef<Path>) -> Result<StageArtifacts> {
    config.validate()?;
    let run_dir = run_dir.as_ref();
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let test = data.test.as_ref();
    let load_model = |d: &Path| StageModel::load(d);
    let save_model = |m: &StageModel, d: &Path| m.save(d);
    let load_synth = |d: &Path| SyntheticCorpus::load(d);
    let save_synth = |s: &SyntheticCorpus, d: &Path| s.save(d);

    let backward_baseline = stage(run_dir, 1, "backward baseline", load_model, save_model, || {
        train_backward(&data.train, &data.dev, test, config)
    })?;
    let synth_a = stage(run_dir, 2, "synthetic data A", load_synth, save_synth, || {
        generate_synthetic(&backward_baseline, &data.monolingual)
    })?;
    let backward_improved = stage(run_dir, 3, "self-training", load_model, save_model, || {
        self_train(&data.train, &synth_a.corpus, config.strategy_backward, &data.dev, test, config)
    })?;
    let synth_b = stage(run_dir, 4, "synthetic data B", load_synth, save_synth, || {
        generate_synthetic(&backward_improved, &data.monolingual)
    })?;
    let forward_model = stage(run_dir, 5, "forward model", load_model, save_model, || {
        let label = format!("forward_{}_synth_b", config.strategy_forward);
        train_forward(&data.train, &synth_b.corpus, config.strategy_forward, &data.dev, test, &label, config)
    })?;
    Ok(StageArtifacts {
        backward_baseline,
        synth_a,
        backward_improved,
        synth_b,
        forward_model,
    })
}
