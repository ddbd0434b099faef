//! Corpus- and sentence-level BLEU.
//!
//! N-gram orders for which the hypotheses contain no n-grams at all are left
//! out of the geometric mean instead of zeroing the score, so very short
//! toy sentences still get a meaningful value.

use std::collections::HashMap;
use std::fmt;

use crate::text::Sentence;
use crate::{Error, Result};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    #[default]
    None,
    /// Add one to numerator and denominator of the n >= 2 precisions.
    Add1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuScore {
    pub score: f64,
    /// Modified precisions for n = 1..=4; `None` where no n-grams existed.
    pub precisions: [Option<f64>; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_length: usize,
    pub ref_length: usize,
}

impl fmt::Display for BleuScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ps: Vec<String> = self
            .precisions
            .iter()
            .map(|p| match p {
                Some(p) => format!("{:.1}", p * 100.0),
                None => "-".to_owned(),
            })
            .collect();
        write!(
            f,
            "BLEU = {:.2} ({}, BP={:.3})",
            self.score,
            ps.join("/"),
            self.brevity_penalty
        )
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU with clipped n-gram precision (n = 1..=4) and brevity penalty.
pub fn bleu_corpus(
    hypotheses: &[Sentence],
    references: &[Sentence],
    smoothing: Smoothing,
) -> Result<BleuScore> {
    if hypotheses.len() != references.len() {
        return Err(Error::LengthMismatch(format!(
            "{} hypotheses vs {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if references.is_empty() {
        return Err(Error::InvalidInput("no references".into()));
    }

    let mut matches = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let mut hyp_length = 0;
    let mut ref_length = 0;
    for (hyp, reference) in hypotheses.iter().zip(references) {
        hyp_length += hyp.len();
        ref_length += reference.len();
        for n in 1..=MAX_ORDER {
            let hyp_counts = ngram_counts(hyp.tokens(), n);
            let ref_counts = ngram_counts(reference.tokens(), n);
            for (gram, count) in hyp_counts {
                totals[n - 1] += count;
                matches[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
            }
        }
    }

    let mut precisions = [None; MAX_ORDER];
    for n in 0..MAX_ORDER {
        if totals[n] > 0 {
            let (m, t) = match smoothing {
                Smoothing::Add1 if n > 0 => (matches[n] + 1, totals[n] + 1),
                _ => (matches[n], totals[n]),
            };
            precisions[n] = Some(m as f64 / t as f64);
        }
    }

    let brevity_penalty = if hyp_length == 0 {
        0.0
    } else if hyp_length < ref_length {
        (1.0 - ref_length as f64 / hyp_length as f64).exp()
    } else {
        1.0
    };

    let used: Vec<f64> = precisions.iter().flatten().copied().collect();
    let score = if used.is_empty() || used.iter().any(|&p| p == 0.0) {
        0.0
    } else {
        let log_mean = used.iter().map(|p| p.ln()).sum::<f64>() / used.len() as f64;
        (100.0 * brevity_penalty * log_mean.exp()).min(100.0)
    };

    Ok(BleuScore {
        score,
        precisions,
        brevity_penalty,
        hyp_length,
        ref_length,
    })
}

/// Add-one smoothed BLEU of a single pair.
pub fn bleu_sentence(hypothesis: &Sentence, reference: &Sentence) -> Result<BleuScore> {
    if reference.is_empty() {
        return Err(Error::InvalidInput("empty reference".into()));
    }
    bleu_corpus(
        std::slice::from_ref(hypothesis),
        std::slice::from_ref(reference),
        Smoothing::Add1,
    )
}
