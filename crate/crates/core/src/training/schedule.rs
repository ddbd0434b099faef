use serde::{Deserialize, Serialize};

use super::strategy::Strategy;
use crate::{Error, Result};

/// Step budget, evaluation cadence and early-stopping rule of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSchedule {
    pub strategy: Strategy,
    pub eval_interval_steps: u64,
    /// Step budget per training phase.
    pub max_steps: u64,
    pub patience_evals: usize,
    pub min_improvement_bleu: f64,
    /// Early stopping is not armed before this many steps of a phase.
    pub min_steps: u64,
    /// Snapshots kept for averaging; 0 keeps every snapshot.
    pub checkpoint_keep: usize,
    /// Keep Adam moments between pre-training and fine-tuning.
    pub retain_moments: bool,
    pub seed: u64,
}

impl Default for TrainingSchedule {
    /// Desk-scale cadence with the published stopping rule.
    fn default() -> Self {
        TrainingSchedule {
            strategy: Strategy::Mix,
            eval_interval_steps: 200,
            max_steps: 8_000,
            patience_evals: 4,
            min_improvement_bleu: 0.2,
            min_steps: 2_000,
            checkpoint_keep: 8,
            retain_moments: true,
            seed: 1,
        }
    }
}

impl TrainingSchedule {
    /// The published cadence: evaluation every 5,000 steps up to 200,000.
    pub fn full_scale() -> Self {
        TrainingSchedule {
            eval_interval_steps: 5_000,
            max_steps: 200_000,
            min_steps: 0,
            ..TrainingSchedule::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_interval_steps == 0 {
            return Err(Error::config("eval_interval_steps must be positive"));
        }
        if self.patience_evals == 0 {
            return Err(Error::config("patience_evals must be at least 1"));
        }
        if !(self.min_improvement_bleu >= 0.0) {
            return Err(Error::config("min_improvement_bleu must be non-negative"));
        }
        Ok(())
    }
}

/// Early-stopping rule over a history of dev BLEU scores.
///
/// An evaluation fails when it does not beat the best earlier score by more
/// than `min_improvement`; the first evaluation never fails. Stops once the
/// latest `patience` evaluations all failed.
pub fn should_stop(history: &[f64], patience: usize, min_improvement: f64) -> bool {
    if patience == 0 || history.len() <= patience {
        return false;
    }
    let mut best = history[0];
    let mut failures = 0;
    for &score in &history[1..] {
        if score <= best + min_improvement {
            failures += 1;
        } else {
            failures = 0;
        }
        best = best.max(score);
    }
    failures >= patience
}
