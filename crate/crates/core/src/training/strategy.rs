use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::text::{mix_corpora, tag_synthetic, Direction, ParallelCorpus};
use crate::{Error, Result};

/// How authentic and synthetic pairs are combined for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    /// One shuffled corpus of authentic and synthetic pairs.
    Mix,
    /// As `Mix`, with the machine-generated side of synthetic pairs tagged.
    Tagged,
    /// Train on synthetic pairs, then continue on authentic pairs.
    PretrainSynthThenAuth,
    /// Train on authentic pairs, then continue on synthetic pairs.
    PretrainAuthThenSynth,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Mix,
        Strategy::Tagged,
        Strategy::PretrainSynthThenAuth,
        Strategy::PretrainAuthThenSynth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Mix => "mix",
            Strategy::Tagged => "tagged",
            Strategy::PretrainSynthThenAuth => "pretrain_synth_then_auth",
            Strategy::PretrainAuthThenSynth => "pretrain_auth_then_synth",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == key)
            .ok_or_else(|| Error::config(format!("unknown strategy {s:?}")))
    }
}

impl TryFrom<String> for Strategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.name().to_owned()
    }
}

/// One training phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub label: String,
    pub corpus: ParallelCorpus,
}

/// Orders the training data for `strategy`. Both corpora must already be
/// oriented for `direction`. Empty phases are dropped, so an empty synthetic
/// corpus always reduces to training on authentic data alone.
pub fn prepare_strategy(
    authentic: &ParallelCorpus,
    synthetic: &ParallelCorpus,
    strategy: Strategy,
    direction: Direction,
    seed: u64,
) -> Result<Vec<Phase>> {
    let phase = |label: &str, corpus: ParallelCorpus| Phase {
        label: label.to_owned(),
        corpus,
    };
    let phases = match strategy {
        Strategy::Mix => vec![phase("mix", mix_corpora(authentic, synthetic, seed)?)],
        Strategy::Tagged => {
            let tagged = tag_synthetic(synthetic, direction)?;
            vec![phase("tagged", mix_corpora(authentic, &tagged, seed)?)]
        }
        Strategy::PretrainSynthThenAuth => vec![
            phase("pretrain_synthetic", synthetic.clone()),
            phase("finetune_authentic", authentic.clone()),
        ],
        Strategy::PretrainAuthThenSynth => vec![
            phase("pretrain_authentic", authentic.clone()),
            phase("finetune_synthetic", synthetic.clone()),
        ],
    };
    let phases: Vec<Phase> = phases.into_iter().filter(|p| !p.corpus.is_empty()).collect();
    if phases.is_empty() {
        return Err(Error::EmptyCorpus("no training data for any phase".into()));
    }
    Ok(phases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{Origin, Sentence, SentencePair};

    fn corpus(pairs: &[(&str, &str)], origin: Origin) -> ParallelCorpus {
        ParallelCorpus::new(
            pairs
                .iter()
                .map(|(s, t)| SentencePair::new(Sentence::from_text(s), Sentence::from_text(t), origin).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn empty() -> ParallelCorpus {
        ParallelCorpus::new(Vec::new()).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("MIX".parse::<Strategy>().unwrap(), Strategy::Mix);
        assert!("fancy".parse::<Strategy>().is_err());
    }

    #[test]
    fn mix_without_synthetic_is_authentic() {
        let a = corpus(&[("a b", "x y"), ("c", "z")], Origin::Authentic);
        let phases = prepare_strategy(&a, &empty(), Strategy::Mix, Direction::Forward, 1).unwrap();
        assert_eq!(phases.len(), 1);
        let mut got: Vec<_> = phases[0].corpus.pairs().to_vec();
        got.sort_by(|x, y| x.source.cmp(&y.source));
        assert_eq!(got, a.pairs());
    }

    #[test]
    fn tagged_marks_machine_side_only() {
        let a = corpus(&[("y1 y2", "x1")], Origin::Authentic);
        let s = corpus(&[("y3", "x2 x3"), ("y4", "x4")], Origin::Synthetic);
        let phases = prepare_strategy(&a, &s, Strategy::Tagged, Direction::Backward, 2).unwrap();
        for p in phases[0].corpus.pairs() {
            match p.origin {
                Origin::Synthetic => assert!(p.target.starts_with_tag() && !p.source.starts_with_tag()),
                Origin::Authentic => assert!(!p.target.starts_with_tag() && !p.source.starts_with_tag()),
            }
        }
    }

    #[test]
    fn pretrain_orders_phases() {
        let a = corpus(&[("a", "x")], Origin::Authentic);
        let s = corpus(&[("b", "y")], Origin::Synthetic);
        let p = prepare_strategy(&a, &s, Strategy::PretrainSynthThenAuth, Direction::Backward, 0).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].corpus, s);
        assert_eq!(p[1].corpus, a);
        let p = prepare_strategy(&a, &s, Strategy::PretrainAuthThenSynth, Direction::Backward, 0).unwrap();
        assert_eq!(p[0].corpus, a);
        assert_eq!(p[1].corpus, s);
        assert!(prepare_strategy(&empty(), &empty(), Strategy::PretrainAuthThenSynth, Direction::Forward, 0).is_err());
    }
}
