//! Per-model learning curves.
//!
//! File format, tab separated:
//! ```text
//! # label   <label>
//! step      dev_bleu
//! 200       3.1416
//! ...
//! # best       <step>  <bleu>
//! # averaged   <bleu>  <end_step>  <k>
//! # test       <bleu>
//! ```
//! Footer rows appear only when the value is known. Wall time is not
//! written so that reruns produce identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub label: String,
    /// `(step, dev BLEU)` with strictly increasing steps.
    pub curve: Vec<(u64, f64)>,
    pub best: Option<(u64, f64)>,
    pub averaged_bleu: Option<f64>,
    /// `(last step, number of checkpoints)` of the averaging window.
    pub averaged_window: Option<(u64, usize)>,
    pub test_bleu: Option<f64>,
    pub wall_time: Duration,
}

impl ExperimentReport {
    pub fn new(label: impl Into<String>) -> Self {
        ExperimentReport {
            label: label.into(),
            ..ExperimentReport::default()
        }
    }

    /// Appends an evaluation and keeps `best` in sync; the first of equal
    /// maxima wins.
    pub fn push(&mut self, step: u64, bleu: f64) {
        self.curve.push((step, bleu));
        if self.best.is_none_or(|(_, b)| bleu > b) {
            self.best = Some((step, bleu));
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# label\t{}", self.label);
        out.push_str("step\tdev_bleu\n");
        for (step, bleu) in &self.curve {
            let _ = writeln!(out, "{step}\t{bleu:.4}");
        }
        if let Some((step, bleu)) = self.best {
            let _ = writeln!(out, "# best\t{step}\t{bleu:.4}");
        }
        if let (Some(bleu), Some((end, k))) = (self.averaged_bleu, self.averaged_window) {
            let _ = writeln!(out, "# averaged\t{bleu:.4}\t{end}\t{k}");
        }
        if let Some(bleu) = self.test_bleu {
            let _ = writeln!(out, "# test\t{bleu:.4}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<ExperimentReport> {
        let bad = |line: usize, what: &str| Error::InvalidInput(format!("report line {line}: {what}"));
        let mut report = ExperimentReport::default();
        let mut header_seen = false;
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let fields: Vec<&str> = line.split('\t').collect();
            let num = |k: usize| -> Result<f64> {
                fields
                    .get(k)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad(n, "expected a number"))
            };
            let int = |k: usize| -> Result<u64> {
                fields
                    .get(k)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad(n, "expected an integer"))
            };
            match fields[0] {
                "# label" => report.label = fields.get(1).unwrap_or(&"").to_string(),
                "step" => header_seen = true,
                "# best" => report.best = Some((int(1)?, num(2)?)),
                "# averaged" => {
                    report.averaged_bleu = Some(num(1)?);
                    report.averaged_window = Some((int(2)?, int(3)? as usize));
                }
                "# test" => report.test_bleu = Some(num(1)?),
                _ if header_seen => {
                    let step = int(0)?;
                    if report.curve.last().is_some_and(|&(s, _)| s >= step) {
                        return Err(bad(n, "steps must increase"));
                    }
                    report.curve.push((step, num(1)?));
                }
                _ => return Err(bad(n, "unexpected line before header")),
            }
        }
        if !header_seen {
            return Err(Error::InvalidInput("report has no header".into()));
        }
        Ok(report)
    }
}

pub fn write_report(report: &ExperimentReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, report.to_tsv()).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ExperimentReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentReport::from_tsv(&text)
}
