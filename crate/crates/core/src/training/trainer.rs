use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::batching::make_batches;
use super::schedule::{should_stop, TrainingSchedule};
use crate::metrics::{bleu_corpus, Smoothing};
use crate::model::{greedy_decode_ids, greedy_decode_many, loss_and_gradients, Checkpoint, IdPair};
use crate::text::{decode_bpe, is_special, BpeModel, ParallelCorpus, Sentence};
use crate::{Error, Result};

/// Held-out pairs prepared for repeated evaluation: segmented, id-mapped
/// sources and word-level references.
#[derive(Debug, Clone, PartialEq)]
pub struct DevSet {
    pub sources: Vec<Vec<u32>>,
    pub references: Vec<Sentence>,
}

impl DevSet {
    /// `corpus` must be oriented like the model; references keep any tags
    /// stripped.
    pub fn new(corpus: &ParallelCorpus, src_bpe: &BpeModel, checkpoint: &Checkpoint) -> DevSet {
        let sources = src_bpe
            .apply_all(corpus.sources())
            .iter()
            .map(|s| checkpoint.src_vocab.encode(s))
            .collect();
        let references = corpus.targets().map(Sentence::without_tags).collect();
        DevSet { sources, references }
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

/// Rows decoded per batch during evaluation.
const EVAL_BATCH: usize = 64;

/// Word-level output: reserved tokens (including `<unk>`) dropped, subwords
/// joined.
fn postprocess(checkpoint: &Checkpoint, ids: &[u32]) -> Sentence {
    let tokens: Vec<String> = checkpoint
        .tgt_vocab
        .decode(ids)
        .into_iter()
        .filter(|t| !is_special(t))
        .collect();
    decode_bpe(&tokens).0
}

/// Unsmoothed corpus BLEU of greedy translations of `dev`. Rows that fail to
/// decode count as empty hypotheses.
pub fn evaluate(checkpoint: &Checkpoint, dev: &DevSet) -> Result<f64> {
    if dev.is_empty() {
        return Err(Error::EmptyCorpus("development set".into()));
    }
    let mut order: Vec<usize> = (0..dev.len()).collect();
    order.sort_by_key(|&i| dev.sources[i].len());
    let mut hyps = vec![Sentence::default(); dev.len()];
    let max_len = checkpoint.config.max_decode_length;
    for chunk in order.chunks(EVAL_BATCH) {
        let rows: Vec<&[u32]> = chunk.iter().map(|&i| dev.sources[i].as_slice()).collect();
        if let Ok(outs) = greedy_decode_ids(&checkpoint.params, &rows, max_len) {
            for (&i, ids) in chunk.iter().zip(outs) {
                hyps[i] = postprocess(checkpoint, &ids);
            }
        }
    }
    Ok(bleu_corpus(&hyps, &dev.references, Smoothing::None)?.score)
}

/// Translates word-level sentences: segment, decode, join subwords, strip
/// tags. Each sentence fails independently.
pub fn translate_sentences(
    checkpoint: &Checkpoint,
    src_bpe: &BpeModel,
    sentences: &[Sentence],
) -> Vec<Result<Sentence>> {
    let segmented = src_bpe.apply_all(sentences);
    greedy_decode_many(checkpoint, &segmented, checkpoint.config.max_decode_length)
        .into_iter()
        .map(|r| r.map(|s| decode_bpe(s.tokens()).0.without_tags()))
        .collect()
}

/// Result of one training phase.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Model state after the final optimizer step.
    pub last: Checkpoint,
    /// Snapshots taken at evaluation boundaries, oldest first.
    pub snapshots: Vec<Checkpoint>,
    /// `(global step, dev BLEU)` per evaluation.
    pub curve: Vec<(u64, f64)>,
    pub stopped_early: bool,
}

/// Runs optimizer steps on `pairs`, evaluating on `dev` every
/// `eval_interval_steps` (counted on the global step) until `max_steps`
/// steps of this phase or early stopping.
pub fn train(
    checkpoint: Checkpoint,
    pairs: &[IdPair],
    dev: &DevSet,
    schedule: &TrainingSchedule,
) -> Result<TrainOutcome> {
    schedule.validate()?;
    checkpoint.config.validate()?;
    if dev.is_empty() {
        return Err(Error::EmptyCorpus("development set".into()));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus("training pairs".into()));
    }
    let config = checkpoint.config.clone();
    let mut ckpt = checkpoint;
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed ^ ckpt.step.rotate_left(32));
    let mut snapshots = VecDeque::new();
    let mut curve = Vec::new();
    let mut scores = Vec::new();
    let mut batches = Vec::new().into_iter();
    let mut stopped_early = false;

    for phase_step in 1..=schedule.max_steps {
        let batch = match batches.next() {
            Some(b) => b,
            None => {
                batches = make_batches(pairs, config.batch_size, rng.random())?.into_iter();
                batches.next().expect("non-empty epoch")
            }
        };
        let dropout = (config.dropout > 0.0).then(|| (config.dropout, rng.random()));
        let (loss, _, mut grads) = loss_and_gradients(&ckpt.params, &batch, dropout)?;
        let step = ckpt.step + 1;
        if !loss.is_finite() {
            return Err(Error::Divergence { step });
        }
        if config.clip_norm > 0.0 {
            let norm = grads.global_norm();
            if !norm.is_finite() {
                return Err(Error::Divergence { step });
            }
            if norm > config.clip_norm as f32 {
                grads.scale(config.clip_norm as f32 / norm);
            }
        }
        ckpt.apply_adam(&grads)?;

        if ckpt.step % schedule.eval_interval_steps == 0 {
            let bleu = evaluate(&ckpt, dev)?;
            log::info!("step {} dev BLEU {bleu:.2} (batch loss {loss:.3})", ckpt.step);
            curve.push((ckpt.step, bleu));
            scores.push(bleu);
            snapshots.push_back(ckpt.clone());
            if schedule.checkpoint_keep > 0 && snapshots.len() > schedule.checkpoint_keep {
                snapshots.pop_front();
            }
            if phase_step >= schedule.min_steps
                && should_stop(&scores, schedule.patience_evals, schedule.min_improvement_bleu) {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        last: ckpt,
        snapshots: snapshots.into(),
        curve,
        stopped_early,
    })
}
