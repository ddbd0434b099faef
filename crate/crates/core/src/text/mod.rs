//! Corpus handling, BPE segmentation and vocabularies.

mod bpe;
mod corpus;
mod vocab;

pub use bpe::{decode_bpe, learn_bpe, BpeModel, CONTINUATION_MARKER};
pub use corpus::{
    load_corpus, load_monolingual, mix_corpora, save_corpus, save_monolingual, tag_synthetic,
    Direction, MonolingualCorpus, Origin, ParallelCorpus, SentencePair,
};
pub use vocab::{build_vocab, Vocabulary};

use std::fmt;

pub const BLANK: &str = "<blank>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const SYN: &str = "<SYN>";

/// Reserved tokens in their fixed id order.
pub const SPECIALS: [&str; 5] = [BLANK, BOS, EOS, UNK, SYN];

pub fn is_special(token: &str) -> bool {
    SPECIALS.contains(&token)
}

/// A whitespace-tokenized sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sentence(Vec<String>);

impl Sentence {
    /// Splits surface text on unicode whitespace.
    pub fn from_text(text: &str) -> Self {
        Sentence(text.split_whitespace().map(str::to_owned).collect())
    }

    /// Builds a sentence from tokens, dropping empty ones and splitting any
    /// token that carries whitespace.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Sentence(
            tokens
                .into_iter()
                .flat_map(|t| {
                    t.as_ref()
                        .split_whitespace()
                        .map(str::to_owned)
                        .collect::<Vec<_>>()
                })
                .collect(),
        )
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn starts_with_tag(&self) -> bool {
        self.0.first().is_some_and(|t| t == SYN)
    }

    pub fn with_tag(&self) -> Sentence {
        let mut tokens = Vec::with_capacity(self.0.len() + 1);
        tokens.push(SYN.to_owned());
        tokens.extend(self.0.iter().cloned());
        Sentence(tokens)
    }

    /// Drops every `<SYN>` token.
    pub fn without_tags(&self) -> Sentence {
        Sentence(self.0.iter().filter(|t| *t != SYN).cloned().collect())
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}
