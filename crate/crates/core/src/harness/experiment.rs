//! Strategy-comparison experiments and their output files.
//!
//! Output directory layout:
//! ```text
//! comparison.tsv        one row per arm
//! reports/<arm>.tsv     learning curve and summary of each arm
//! curves/<arm>.tsv      step/BLEU series; curves/index.tsv lists them
//! config.toml           the effective configuration
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::{Arm, ExperimentConfig};
use super::toy::gen_toy_corpus;
use crate::pipeline::{
    generate_synthetic, self_train, train_backward, train_forward, PipelineData, StageModel,
    SyntheticCorpus,
};
use crate::text::{load_corpus, load_monolingual, Origin, ParallelCorpus};
use crate::training::{write_report, ExperimentReport, Strategy};
use crate::{Error, Result};

/// Loads or generates the corpora named by `config`.
pub fn load_data(config: &ExperimentConfig) -> Result<PipelineData> {
    if let Some(spec) = &config.toy {
        let c = gen_toy_corpus(spec)?;
        return Ok(PipelineData {
            train: c.train,
            dev: c.dev,
            test: Some(c.test),
            monolingual: c.monolingual,
        });
    }
    let files = config
        .data
        .as_ref()
        .ok_or_else(|| Error::config("no data: add a [toy] or [data] table"))?;
    let test = match (&files.test_src, &files.test_tgt) {
        (Some(s), Some(t)) => Some(load_corpus(s, t, Origin::Authentic)?),
        _ => None,
    };
    Ok(PipelineData {
        train: load_corpus(&files.train_src, &files.train_tgt, Origin::Authentic)?,
        dev: load_corpus(&files.dev_src, &files.dev_tgt, Origin::Authentic)?,
        test,
        monolingual: load_monolingual(&files.monolingual)?,
    })
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmResult {
    pub arm: Arm,
    pub model: StageModel,
}

impl ArmResult {
    pub fn report(&self) -> &ExperimentReport {
        &self.model.report
    }
}

/// Results of every arm in the order they were requested.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub arms: Vec<ArmResult>,
    pub synth_a: Option<SyntheticCorpus>,
    pub synth_b: Option<SyntheticCorpus>,
}

impl ExperimentOutcome {
    pub fn get(&self, arm: Arm) -> Option<&ArmResult> {
        self.arms.iter().find(|r| r.arm == arm)
    }

    /// The comparison table: best dev score and its step, averaged dev score
    /// and test score per arm (`-` when unknown).
    pub fn table(&self) -> String {
        let mut out = String::from("arm\tdirection\tbest_dev\tbest_step\taveraged_dev\ttest\n");
        let fmt = |v: Option<f64>| v.map_or("-".to_owned(), |v| format!("{v:.4}"));
        for r in &self.arms {
            let rep = r.report();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.arm,
                if r.arm.is_forward() { "forward" } else { "backward" },
                fmt(rep.best.map(|b| b.1)),
                rep.best.map_or("-".to_owned(), |b| b.0.to_string()),
                fmt(rep.averaged_bleu),
                fmt(rep.test_bleu),
            );
        }
        out
    }
}

/// Writes one `step<TAB>dev_bleu` file per report plus `index.tsv`
/// (`label<TAB>file<TAB>points`). Returns the written series paths.
pub fn emit_curves(reports: &[&ExperimentReport], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("no reports to emit".into()));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = String::from("label\tfile\tpoints\n");
    let mut paths = Vec::with_capacity(reports.len());
    for rep in reports {
        let file = format!("{}.tsv", rep.label);
        let mut series = String::from("step\tdev_bleu\n");
        for (step, bleu) in &rep.curve {
            let _ = writeln!(series, "{step}\t{bleu:.4}");
        }
        let path = dir.join(&file);
        fs::write(&path, series).map_err(|e| Error::io(&path, e))?;
        let _ = writeln!(index, "{}\t{file}\t{}", rep.label, rep.curve.len());
        paths.push(path);
    }
    let path = dir.join("index.tsv");
    fs::write(&path, index).map_err(|e| Error::io(&path, e))?;
    Ok(paths)
}

/// Runs every requested arm, sharing the baseline backward model and the
/// synthetic corpora between arms, and writes reports, curves and the
/// comparison table under the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let data = load_data(config)?;
    let out_dir = &config.output_dir;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let cfg_path = out_dir.join("config.toml");
    fs::write(&cfg_path, config.to_toml()).map_err(|e| Error::io(&cfg_path, e))?;

    let p = &config.pipeline;
    let test = data.test.as_ref();
    let needs_b = config.arms.contains(&Arm::ForwardSynthB);
    let needs_a = needs_b
        || config
            .arms
            .iter()
            .any(|a| matches!(a, Arm::SelfTrain(_) | Arm::ForwardSynthA));
    let needs_baseline = needs_a || config.arms.contains(&Arm::Baseline);

    let stage_err = |name: &str| {
        let name = name.to_owned();
        move |e| Error::stage(name, e)
    };
    let baseline = if needs_baseline {
        Some(train_backward(&data.train, &data.dev, test, p).map_err(stage_err("baseline"))?)
    } else {
        None
    };
    let synth_a = match &baseline {
        Some(b) if needs_a => Some(generate_synthetic(b, &data.monolingual).map_err(stage_err("synthetic data A"))?),
        _ => None,
    };

    let mut self_trained: BTreeMap<&'static str, StageModel> = BTreeMap::new();
    let mut strategies: Vec<Strategy> = config
        .arms
        .iter()
        .filter_map(|a| match a {
            Arm::SelfTrain(s) => Some(*s),
            _ => None,
        })
        .collect();
    if needs_b && !strategies.contains(&p.strategy_backward) {
        strategies.push(p.strategy_backward);
    }
    if let Some(synth) = &synth_a {
        for s in strategies {
            let model = self_train(&data.train, &synth.corpus, s, &data.dev, test, p)
                .map_err(stage_err(&format!("self-training {s}")))?;
            self_trained.insert(s.name(), model);
        }
    }
    let synth_b = if needs_b {
        let improved = &self_trained[p.strategy_backward.name()];
        Some(generate_synthetic(improved, &data.monolingual).map_err(stage_err("synthetic data B"))?)
    } else {
        None
    };

    let empty = ParallelCorpus::new(Vec::new())?;
    let forward = |label: &str, synth: &ParallelCorpus| {
        train_forward(&data.train, synth, p.strategy_forward, &data.dev, test, label, p)
            .map_err(stage_err(label))
    };
    let mut arms = Vec::with_capacity(config.arms.len());
    // baseline first, then the remaining arms in configuration order
    let mut order: Vec<Arm> = config.arms.iter().copied().filter(|&a| a == Arm::Baseline).collect();
    order.extend(config.arms.iter().copied().filter(|&a| a != Arm::Baseline));
    order.dedup();
    for arm in order {
        let model = match arm {
            Arm::Baseline => baseline.clone().expect("baseline trained"),
            Arm::SelfTrain(s) => self_trained[s.name()].clone(),
            Arm::ForwardAuthentic => forward("forward_authentic", &empty)?,
            Arm::ForwardSynthA => forward("forward_synth_a", &synth_a.as_ref().expect("synth A").corpus)?,
            Arm::ForwardSynthB => forward("forward_synth_b", &synth_b.as_ref().expect("synth B").corpus)?,
        };
        arms.push(ArmResult { arm, model });
    }
    for r in &mut arms {
        r.model.report.label = r.arm.name();
    }
    let outcome = ExperimentOutcome { arms, synth_a, synth_b };

    let reports_dir = out_dir.join("reports");
    fs::create_dir_all(&reports_dir).map_err(|e| Error::io(&reports_dir, e))?;
    for r in &outcome.arms {
        write_report(r.report(), reports_dir.join(format!("{}.tsv", r.arm)))?;
    }
    let reports: Vec<&ExperimentReport> = outcome.arms.iter().map(ArmResult::report).collect();
    emit_curves(&reports, out_dir.join("curves"))?;
    let table_path = out_dir.join("comparison.tsv");
    fs::write(&table_path, outcome.table()).map_err(|e| Error::io(&table_path, e))?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_and_index() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = ExperimentReport::new("mix");
        a.push(200, 1.0);
        a.push(400, 2.5);
        let mut b = ExperimentReport::new("baseline");
        b.push(200, 0.5);
        let paths = emit_curves(&[&a, &b], dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        let text = fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(text, "step\tdev_bleu\n200\t1.0000\n400\t2.5000\n");
        let index = fs::read_to_string(dir.path().join("index.tsv")).unwrap();
        assert_eq!(index, "label\tfile\tpoints\nmix\tmix.tsv\t2\nbaseline\tbaseline.tsv\t1\n");
        assert!(emit_curves(&[], dir.path()).is_err());
    }
}
