use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{is_special, Sentence};
use crate::{Error, Result};

/// Provenance of a sentence pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Authentic,
    Synthetic,
}

/// Which way a model translates.
///
/// Corpora are stored as (source-language, target-language) pairs; a
/// backward model reads the target language and writes the source language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Sentence,
    pub target: Sentence,
    pub origin: Origin,
}

impl SentencePair {
    pub fn new(source: Sentence, target: Sentence, origin: Origin) -> Result<Self> {
        if source.is_empty() || target.is_empty() {
            return Err(Error::InvalidInput(
                "sentence pairs need non-empty source and target".into(),
            ));
        }
        Ok(SentencePair {
            source,
            target,
            origin,
        })
    }

    pub fn swapped(&self) -> SentencePair {
        SentencePair {
            source: self.target.clone(),
            target: self.source.clone(),
            origin: self.origin,
        }
    }
}

/// Aligned sentence pairs, each carrying an [`Origin`] flag.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParallelCorpus {
    pairs: Vec<SentencePair>,
}

impl ParallelCorpus {
    pub fn new(pairs: Vec<SentencePair>) -> Result<Self> {
        if let Some(i) = pairs
            .iter()
            .position(|p| p.source.is_empty() || p.target.is_empty())
        {
            return Err(Error::InvalidInput(format!("pair {i} has an empty side")));
        }
        Ok(ParallelCorpus { pairs })
    }

    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> impl Iterator<Item = &Sentence> {
        self.pairs.iter().map(|p| &p.source)
    }

    pub fn targets(&self) -> impl Iterator<Item = &Sentence> {
        self.pairs.iter().map(|p| &p.target)
    }

    /// Orients the pairs as (model input, model output) for `direction`.
    pub fn oriented(&self, direction: Direction) -> ParallelCorpus {
        match direction {
            Direction::Forward => self.clone(),
            Direction::Backward => ParallelCorpus {
                pairs: self.pairs.iter().map(SentencePair::swapped).collect(),
            },
        }
    }

    pub fn with_origin(mut self, origin: Origin) -> ParallelCorpus {
        for p in &mut self.pairs {
            p.origin = origin;
        }
        self
    }

    pub fn count_origin(&self, origin: Origin) -> usize {
        self.pairs.iter().filter(|p| p.origin == origin).count()
    }

    pub fn concat(&self, other: &ParallelCorpus) -> ParallelCorpus {
        let mut pairs = self.pairs.clone();
        pairs.extend(other.pairs.iter().cloned());
        ParallelCorpus { pairs }
    }
}

/// Untranslated sentences in one language.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MonolingualCorpus {
    sentences: Vec<Sentence>,
}

impl MonolingualCorpus {
    pub fn new(sentences: Vec<Sentence>) -> Result<Self> {
        if let Some(i) = sentences.iter().position(Sentence::is_empty) {
            return Err(Error::InvalidInput(format!("sentence {i} is empty")));
        }
        Ok(MonolingualCorpus { sentences })
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

fn read_lines(path: &Path) -> Result<Vec<Sentence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut sentences = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let sentence = Sentence::from_text(line);
        if sentence.is_empty() {
            return Err(Error::MalformedCorpus {
                path: path.to_owned(),
                line: i + 1,
                reason: "empty line".into(),
            });
        }
        if let Some(tok) = sentence.tokens().iter().find(|t| is_special(t)) {
            return Err(Error::MalformedCorpus {
                path: path.to_owned(),
                line: i + 1,
                reason: format!("reserved token {tok}"),
            });
        }
        sentences.push(sentence);
    }
    Ok(sentences)
}

/// Reads a line-aligned pair of corpus files.
pub fn load_corpus(
    source_path: impl AsRef<Path>,
    target_path: impl AsRef<Path>,
    origin: Origin,
) -> Result<ParallelCorpus> {
    let sources = read_lines(source_path.as_ref())?;
    let targets = read_lines(target_path.as_ref())?;
    if sources.len() != targets.len() {
        return Err(Error::Alignment {
            source_lines: sources.len(),
            target_lines: targets.len(),
        });
    }
    let pairs = sources
        .into_iter()
        .zip(targets)
        .map(|(source, target)| SentencePair {
            source,
            target,
            origin,
        })
        .collect();
    Ok(ParallelCorpus { pairs })
}

pub fn load_monolingual(path: impl AsRef<Path>) -> Result<MonolingualCorpus> {
    Ok(MonolingualCorpus {
        sentences: read_lines(path.as_ref())?,
    })
}

pub(crate) fn write_sentences<'a>(
    path: &Path,
    sentences: impl Iterator<Item = &'a Sentence>,
) -> Result<()> {
    let mut out = Vec::new();
    for s in sentences {
        writeln!(out, "{s}").expect("write to Vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn save_corpus(
    corpus: &ParallelCorpus,
    source_path: impl AsRef<Path>,
    target_path: impl AsRef<Path>,
) -> Result<()> {
    write_sentences(source_path.as_ref(), corpus.sources())?;
    write_sentences(target_path.as_ref(), corpus.targets())
}

pub fn save_monolingual(corpus: &MonolingualCorpus, path: impl AsRef<Path>) -> Result<()> {
    write_sentences(path.as_ref(), corpus.sentences().iter())
}

/// Concatenates authentic and synthetic data and shuffles the result with a
/// seeded RNG. Origin flags survive the shuffle.
pub fn mix_corpora(
    authentic: &ParallelCorpus,
    synthetic: &ParallelCorpus,
    seed: u64,
) -> Result<ParallelCorpus> {
    if authentic.is_empty() && synthetic.is_empty() {
        return Err(Error::EmptyCorpus("nothing to mix".into()));
    }
    let mut mixed = authentic.concat(synthetic);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mixed.pairs.shuffle(&mut rng);
    Ok(mixed)
}

/// Prefixes the machine-generated side of every synthetic pair with `<SYN>`.
///
/// `corpus` must already be oriented for `direction`. Synthetic pairs come
/// from back-translation, so the machine-generated side is the
/// source-language sentence: the training output of a backward model and
/// the training input of a forward model.
pub fn tag_synthetic(corpus: &ParallelCorpus, direction: Direction) -> Result<ParallelCorpus> {
    let mut pairs = Vec::with_capacity(corpus.len());
    for pair in &corpus.pairs {
        let mut pair = pair.clone();
        if pair.origin == Origin::Synthetic {
            let side = match direction {
                Direction::Backward => &mut pair.target,
                Direction::Forward => &mut pair.source,
            };
            if side.starts_with_tag() {
                return Err(Error::DoubleTag(side.to_string()));
            }
            *side = side.with_tag();
        }
        pairs.push(pair);
    }
    Ok(ParallelCorpus { pairs })
}
