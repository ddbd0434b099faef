//! Deterministic synthetic language pairs.
//!
//! Source and target languages have disjoint pseudo-word vocabularies built
//! from syllables. Sentences are drawn token by token from a Zipf
//! distribution over the source vocabulary (exponent 0 is uniform) and
//! translated by the task's fixed transform.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::text::{MonolingualCorpus, Origin, ParallelCorpus, Sentence, SentencePair};
use crate::{Error, Result};

const SOURCE_ONSETS: [&str; 6] = ["p", "t", "k", "b", "d", "g"];
const TARGET_ONSETS: [&str; 6] = ["m", "n", "l", "r", "s", "v"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ToyTask {
    /// Reverse the token order and substitute each word through a fixed
    /// random bijection.
    ReverseMap,
    /// Target equals source.
    Copy,
    /// Substitute word `k` by target word `k + 1 (mod V)`, keeping order.
    ShiftMap,
}

impl ToyTask {
    pub fn name(self) -> &'static str {
        match self {
            ToyTask::ReverseMap => "reverse_map",
            ToyTask::Copy => "copy",
            ToyTask::ShiftMap => "shift_map",
        }
    }
}

impl fmt::Display for ToyTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ToyTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        [ToyTask::ReverseMap, ToyTask::Copy, ToyTask::ShiftMap]
            .into_iter()
            .find(|t| t.name() == key)
            .ok_or_else(|| Error::config(format!("unknown toy task {s:?}")))
    }
}

impl TryFrom<String> for ToyTask {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ToyTask> for String {
    fn from(t: ToyTask) -> String {
        t.name().to_owned()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyTaskSpec {
    pub task: ToyTask,
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Zipf exponent of the token distribution; 0 draws uniformly.
    pub zipf_exponent: f64,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub monolingual: usize,
    pub seed: u64,
}

impl Default for ToyTaskSpec {
    fn default() -> Self {
        ToyTaskSpec {
            task: ToyTask::ReverseMap,
            vocab_size: 200,
            min_len: 3,
            max_len: 8,
            zipf_exponent: 1.0,
            train: 2_000,
            dev: 200,
            test: 500,
            monolingual: 8_000,
            seed: 1,
        }
    }
}

/// Generated corpora; the monolingual set holds target-side sentences.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyCorpora {
    pub train: ParallelCorpus,
    pub dev: ParallelCorpus,
    pub test: ParallelCorpus,
    pub monolingual: MonolingualCorpus,
}

/// The `index`-th pseudo-word over `onsets`: two or more consonant-vowel
/// syllables, written most significant first.
fn pseudo_word(onsets: &[&str], index: usize) -> String {
    let base = onsets.len() * VOWELS.len();
    let mut digits = Vec::new();
    let mut n = index;
    while digits.len() < 2 || n > 0 {
        digits.push(n % base);
        n /= base;
    }
    digits
        .iter()
        .rev()
        .map(|&d| format!("{}{}", onsets[d / VOWELS.len()], VOWELS[d % VOWELS.len()]))
        .collect()
}

/// A fixed word-level transducer.
#[derive(Debug, Clone)]
pub struct ToyLanguage {
    task: ToyTask,
    source_words: Vec<String>,
    target_words: Vec<String>,
    /// Target index of each source index.
    mapping: Vec<usize>,
}

impl ToyLanguage {
    pub fn new(task: ToyTask, vocab_size: usize, seed: u64) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::config("toy vocabulary needs at least 2 words for a bijection"));
        }
        let source_words: Vec<String> = (0..vocab_size).map(|i| pseudo_word(&SOURCE_ONSETS, i)).collect();
        let (target_words, mapping) = match task {
            ToyTask::Copy => (source_words.clone(), (0..vocab_size).collect()),
            ToyTask::ShiftMap => (
                (0..vocab_size).map(|i| pseudo_word(&TARGET_ONSETS, i)).collect(),
                (0..vocab_size).map(|i| (i + 1) % vocab_size).collect(),
            ),
            ToyTask::ReverseMap => {
                let mut perm: Vec<usize> = (0..vocab_size).collect();
                perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_b17e));
                ((0..vocab_size).map(|i| pseudo_word(&TARGET_ONSETS, i)).collect(), perm)
            }
        };
        Ok(ToyLanguage {
            task,
            source_words,
            target_words,
            mapping,
        })
    }

    fn render(&self, indices: &[usize]) -> (Sentence, Sentence) {
        let source = Sentence::from_tokens(indices.iter().map(|&i| &self.source_words[i]));
        let mut mapped: Vec<&String> = indices.iter().map(|&i| &self.target_words[self.mapping[i]]).collect();
        if self.task == ToyTask::ReverseMap {
            mapped.reverse();
        }
        (source, Sentence::from_tokens(mapped))
    }

    /// Applies the task transform to a source sentence.
    pub fn translate(&self, source: &Sentence) -> Result<Sentence> {
        let indices = source
            .tokens()
            .iter()
            .map(|w| {
                self.source_words
                    .iter()
                    .position(|s| s == w)
                    .ok_or_else(|| Error::InvalidInput(format!("{w:?} is not a source word")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.render(&indices).1)
    }

    /// Inverse transform: recovers the source sentence of a target sentence.
    pub fn invert(&self, target: &Sentence) -> Result<Sentence> {
        let mut inverse = vec![0; self.mapping.len()];
        for (s, &t) in self.mapping.iter().enumerate() {
            inverse[t] = s;
        }
        let mut words = target
            .tokens()
            .iter()
            .map(|w| {
                self.target_words
                    .iter()
                    .position(|t| t == w)
                    .map(|t| self.source_words[inverse[t]].clone())
                    .ok_or_else(|| Error::InvalidInput(format!("{w:?} is not a target word")))
            })
            .collect::<Result<Vec<_>>>()?;
        if self.task == ToyTask::ReverseMap {
            words.reverse();
        }
        Ok(Sentence::from_tokens(words))
    }
}

/// Generates train/dev/test/monolingual sets with pairwise-distinct source
/// sentences, so the splits are disjoint at sentence granularity.
pub fn gen_toy_corpus(spec: &ToyTaskSpec) -> Result<ToyCorpora> {
    if spec.min_len == 0 || spec.min_len > spec.max_len {
        return Err(Error::config("toy sentence lengths must satisfy 1 <= min_len <= max_len"));
    }
    if [spec.train, spec.dev, spec.test, spec.monolingual].contains(&0) {
        return Err(Error::config("toy split sizes must be positive"));
    }
    if !(spec.zipf_exponent >= 0.0 && spec.zipf_exponent.is_finite()) {
        return Err(Error::config("zipf_exponent must be a non-negative number"));
    }
    let lang = ToyLanguage::new(spec.task, spec.vocab_size, spec.seed)?;
    let total = spec.train + spec.dev + spec.test + spec.monolingual;
    let weights: Vec<f64> = (1..=spec.vocab_size)
        .map(|r| (r as f64).powf(-spec.zipf_exponent))
        .collect();
    let tokens = WeightedIndex::new(&weights).map_err(|e| Error::config(e.to_string()))?;
    // rank order is decoupled from word spelling
    let mut by_rank: Vec<usize> = (0..spec.vocab_size).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    by_rank.shuffle(&mut rng);

    let mut seen = HashSet::with_capacity(total);
    let mut sentences = Vec::with_capacity(total);
    let max_attempts = 50 * total + 1000;
    let mut attempts = 0;
    while sentences.len() < total {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::config(format!(
                "cannot draw {total} distinct toy sentences from this vocabulary and length range"
            )));
        }
        let len = rng.random_range(spec.min_len..=spec.max_len);
        let indices: Vec<usize> = (0..len).map(|_| by_rank[tokens.sample(&mut rng)]).collect();
        if seen.insert(indices.clone()) {
            sentences.push(indices);
        }
    }
    let mut parts = sentences.chunks(1);
    let mut take = |n: usize| -> Result<ParallelCorpus> {
        let pairs = (&mut parts)
            .take(n)
            .map(|c| {
                let (s, t) = lang.render(&c[0]);
                SentencePair::new(s, t, Origin::Authentic)
            })
            .collect::<Result<Vec<_>>>()?;
        ParallelCorpus::new(pairs)
    };
    let train = take(spec.train)?;
    let dev = take(spec.dev)?;
    let test = take(spec.test)?;
    let mono = take(spec.monolingual)?;
    let monolingual = MonolingualCorpus::new(mono.targets().cloned().collect())?;
    Ok(ToyCorpora {
        train,
        dev,
        test,
        monolingual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(task: ToyTask) -> ToyTaskSpec {
        ToyTaskSpec {
            task,
            vocab_size: 12,
            train: 40,
            dev: 10,
            test: 10,
            monolingual: 30,
            ..ToyTaskSpec::default()
        }
    }

    #[test]
    fn pseudo_words_are_distinct() {
        let words: HashSet<String> = (0..500).map(|i| pseudo_word(&SOURCE_ONSETS, i)).collect();
        assert_eq!(words.len(), 500);
        assert_eq!(pseudo_word(&SOURCE_ONSETS, 0), "papa");
        assert_eq!(pseudo_word(&TARGET_ONSETS, 31), "meme");
    }

    #[test]
    fn copy_task_copies() {
        let c = gen_toy_corpus(&small(ToyTask::Copy)).unwrap();
        assert!(c.train.pairs().iter().all(|p| p.source == p.target));
    }

    #[test]
    fn reverse_map_reverses_and_substitutes() {
        let lang = ToyLanguage::new(ToyTask::ReverseMap, 3, 9).unwrap();
        let abc = Sentence::from_tokens([&lang.source_words[0], &lang.source_words[1], &lang.source_words[2]]);
        let t = lang.translate(&abc).unwrap();
        let expected: Vec<&String> = [2, 1, 0].iter().map(|&i| &lang.target_words[lang.mapping[i]]).collect();
        assert_eq!(t, Sentence::from_tokens(expected));
        assert_eq!(lang.invert(&t).unwrap(), abc);
    }

    #[test]
    fn transforms_are_invertible() {
        for task in [ToyTask::ReverseMap, ToyTask::ShiftMap, ToyTask::Copy] {
            let c = gen_toy_corpus(&small(task)).unwrap();
            let lang = ToyLanguage::new(task, 12, 1).unwrap();
            for p in c.train.pairs() {
                assert_eq!(lang.translate(&p.source).unwrap(), p.target);
                assert_eq!(lang.invert(&p.target).unwrap(), p.source);
            }
        }
    }

    #[test]
    fn deterministic_and_disjoint() {
        let spec = small(ToyTask::ReverseMap);
        let a = gen_toy_corpus(&spec).unwrap();
        assert_eq!(a, gen_toy_corpus(&spec).unwrap());
        let train: HashSet<&Sentence> = a.train.sources().collect();
        assert!(a.dev.sources().all(|s| !train.contains(s)));
        assert!(a.test.sources().all(|s| !train.contains(s)));
        let dev: HashSet<&Sentence> = a.dev.sources().collect();
        assert!(a.test.sources().all(|s| !dev.contains(s)));
        assert_eq!(a.monolingual.len(), 30);
    }

    #[test]
    fn rejects_impossible_specs() {
        assert!(ToyLanguage::new(ToyTask::ShiftMap, 1, 0).is_err());
        let tiny = ToyTaskSpec {
            vocab_size: 2,
            min_len: 1,
            max_len: 2,
            ..small(ToyTask::Copy)
        };
        assert!(gen_toy_corpus(&tiny).is_err());
    }
}
