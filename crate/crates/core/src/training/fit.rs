use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::batching::encode_pairs;
use super::report::ExperimentReport;
use super::schedule::TrainingSchedule;
use super::strategy::Phase;
use super::trainer::{evaluate, train, DevSet};
use crate::model::{
    average_checkpoints, extend_checkpoint_vocab, init_model, select_window, AveragingWindow,
    Checkpoint, ModelConfig,
};
use crate::text::{build_vocab, learn_bpe, BpeModel, ParallelCorpus, Sentence};
use crate::{Error, Result};

/// Subword segmentation and vocabulary limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextConfig {
    pub bpe_merges: usize,
    pub max_vocab: usize,
}

impl Default for TextConfig {
    fn default() -> Self {
        TextConfig {
            bpe_merges: 10_000,
            max_vocab: 50_000,
        }
    }
}

/// A trained translator with its segmentation models.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    /// Average of the final phase's snapshots in the configured window.
    pub averaged: Checkpoint,
    pub last: Checkpoint,
    pub snapshots: Vec<Checkpoint>,
    pub src_bpe: BpeModel,
    pub tgt_bpe: BpeModel,
    pub report: ExperimentReport,
}

impl TrainedModel {
    pub fn dev_set(&self, corpus: &ParallelCorpus) -> DevSet {
        DevSet::new(corpus, &self.src_bpe, &self.averaged)
    }
}

/// Trains a fresh model through `phases` (oriented like the model).
///
/// Segmentation is learned per side on the text of all phases; the
/// vocabulary comes from the first phase and is extended before each later
/// phase. Snapshots of the final phase are averaged over `window`.
pub fn fit(
    label: &str,
    phases: &[Phase],
    dev: &ParallelCorpus,
    model: &ModelConfig,
    schedule: &TrainingSchedule,
    text: &TextConfig,
    window: AveragingWindow,
) -> Result<TrainedModel> {
    let started = Instant::now();
    if phases.is_empty() {
        return Err(Error::EmptyCorpus("no training phases".into()));
    }
    let all_sources: Vec<&Sentence> = phases.iter().flat_map(|p| p.corpus.sources()).collect();
    let all_targets: Vec<&Sentence> = phases.iter().flat_map(|p| p.corpus.targets()).collect();
    let src_bpe = learn_bpe(all_sources.iter().copied(), text.bpe_merges)?;
    let tgt_bpe = learn_bpe(all_targets.iter().copied(), text.bpe_merges)?;

    let mut report = ExperimentReport::new(label);
    let mut ckpt: Option<Checkpoint> = None;
    let mut outcome = None;
    for (i, phase) in phases.iter().enumerate() {
        let src_seg = src_bpe.apply_all(phase.corpus.sources());
        let tgt_seg = tgt_bpe.apply_all(phase.corpus.targets());
        let start = match ckpt.take() {
            None => {
                let src_vocab = build_vocab(&src_seg, text.max_vocab)?;
                let tgt_vocab = build_vocab(&tgt_seg, text.max_vocab)?;
                init_model(model, &src_vocab, &tgt_vocab)?
            }
            Some(prev) => {
                let src_vocab = prev.src_vocab.extended(&src_seg, text.max_vocab);
                let tgt_vocab = prev.tgt_vocab.extended(&tgt_seg, text.max_vocab);
                let mut next = extend_checkpoint_vocab(&prev, &src_vocab, &tgt_vocab, schedule.seed.wrapping_add(i as u64))?;
                if !schedule.retain_moments {
                    next.first_moment = next.params.zeros_like();
                    next.second_moment = next.params.zeros_like();
                }
                next
            }
        };
        let pairs = encode_pairs(&phase.corpus, &src_bpe, &tgt_bpe, &start.src_vocab, &start.tgt_vocab);
        let dev_set = DevSet::new(dev, &src_bpe, &start);
        log::info!("{label}: phase {} ({}) on {} pairs", i + 1, phase.label, pairs.len());
        let phase_schedule = TrainingSchedule {
            seed: schedule.seed.wrapping_add(i as u64),
            ..schedule.clone()
        };
        let out = train(start, &pairs, &dev_set, &phase_schedule)?;
        for &(step, bleu) in &out.curve {
            report.push(step, bleu);
        }
        ckpt = Some(out.last.clone());
        outcome = Some(out);
    }
    let outcome = outcome.expect("at least one phase");
    if outcome.snapshots.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{label}: final phase produced no snapshots to average"
        )));
    }
    let steps: Vec<u64> = outcome.snapshots.iter().map(|c| c.step).collect();
    let used = select_window(&steps, window)?.len();
    let averaged = average_checkpoints(&outcome.snapshots, window)?;
    let dev_set = DevSet::new(dev, &src_bpe, &averaged);
    report.averaged_bleu = Some(evaluate(&averaged, &dev_set)?);
    report.averaged_window = Some((averaged.step, used));
    report.wall_time = started.elapsed();
    Ok(TrainedModel {
        averaged,
        last: outcome.last,
        snapshots: outcome.snapshots,
        src_bpe,
        tgt_bpe,
        report,
    })
}
