use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{is_special, Sentence, SPECIALS};
use crate::{Error, Result};

/// Dense token <-> id mapping with the reserved tokens at fixed ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocabulary {
    pub const BLANK_ID: u32 = 0;
    pub const BOS_ID: u32 = 1;
    pub const EOS_ID: u32 = 2;
    pub const UNK_ID: u32 = 3;
    pub const SYN_ID: u32 = 4;

    /// A vocabulary holding only the reserved tokens.
    pub fn specials_only() -> Self {
        Self::from_tokens(SPECIALS.iter().map(|s| s.to_string()).collect())
            .expect("specials are well formed")
    }

    /// Builds a vocabulary from an id-ordered token list, which must start
    /// with the reserved tokens and contain no duplicates.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::VocabMismatch(
                "vocabulary must start with <blank> <s> </s> <unk> <SYN>".into(),
            ));
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::VocabMismatch(format!("invalid token at id {i}")));
            }
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(Error::VocabMismatch(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Maps tokens to ids; unknown tokens become `<unk>`.
    pub fn encode(&self, sentence: &Sentence) -> Vec<u32> {
        sentence
            .tokens()
            .iter()
            .map(|t| self.id(t).unwrap_or(Self::UNK_ID))
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(super::UNK).to_owned())
            .collect()
    }

    /// Whether `self` is a prefix of `other` (same ids for all shared tokens).
    pub fn is_prefix_of(&self, other: &Vocabulary) -> bool {
        self.len() <= other.len() && self.tokens[..] == other.tokens[..self.len()]
    }

    /// Appends the tokens of `sentences` not already present, most frequent
    /// first, until the vocabulary holds `max_size` entries. Existing ids are
    /// untouched.
    pub fn extended<'a, I>(&self, sentences: I, max_size: usize) -> Vocabulary
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        let mut tokens = self.tokens.clone();
        for t in ranked_tokens(sentences) {
            if tokens.len() >= max_size {
                break;
            }
            if !self.ids.contains_key(&t) {
                tokens.push(t);
            }
        }
        Vocabulary::from_tokens(tokens).expect("extension keeps the vocabulary well formed")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vocabulary> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::from_tokens(text.lines().map(str::to_owned).collect())
    }
}

/// Non-reserved tokens by descending frequency, ties lexicographic.
fn ranked_tokens<'a, I>(sentences: I) -> Vec<String>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for s in sentences {
        for t in s.tokens() {
            if !is_special(t) {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().map(|(t, _)| t.to_owned()).collect()
}

/// Reserved tokens first, then corpus tokens by frequency, truncated to
/// `max_size` entries.
pub fn build_vocab<'a, I>(sentences: I, max_size: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    if max_size < SPECIALS.len() {
        return Err(Error::config(format!(
            "vocabulary size {max_size} cannot hold the {} reserved tokens",
            SPECIALS.len()
        )));
    }
    Ok(Vocabulary::specials_only().extended(sentences, max_size))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> Vec<Sentence> {
        lines.iter().map(|l| Sentence::from_text(l)).collect()
    }

    #[test]
    fn specials_then_frequency() {
        let v = build_vocab(&corpus(&["a b a", "a"]), 7).unwrap();
        assert_eq!(v.tokens(), ["<blank>", "<s>", "</s>", "<unk>", "<SYN>", "a", "b"]);
        assert_eq!(v.id("<SYN>"), Some(Vocabulary::SYN_ID));
    }

    #[test]
    fn ties_are_lexicographic() {
        let v = build_vocab(&corpus(&["b a b a"]), 10).unwrap();
        assert_eq!(&v.tokens()[5..], ["a", "b"]);
    }

    #[test]
    fn truncation_maps_to_unk() {
        let v = build_vocab(&corpus(&["a b a", "a"]), 6).unwrap();
        assert_eq!(v.len(), 6);
        assert_eq!(v.encode(&Sentence::from_text("a b")), [5, Vocabulary::UNK_ID]);
    }

    #[test]
    fn too_small_is_config_error() {
        assert!(matches!(build_vocab(&corpus(&["a"]), 4), Err(Error::Config(_))));
    }

    #[test]
    fn ids_round_trip_and_survive_files() {
        let v = build_vocab(&corpus(&["x y z x", "q"]), 100).unwrap();
        for id in 0..v.len() as u32 {
            assert_eq!(v.id(v.token(id).unwrap()), Some(id));
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab");
        v.save(&p).unwrap();
        assert_eq!(Vocabulary::load(&p).unwrap(), v);
    }

    #[test]
    fn extension_preserves_ids() {
        let v = build_vocab(&corpus(&["a b"]), 100).unwrap();
        let w = v.extended(&corpus(&["c a"]), 100);
        assert!(v.is_prefix_of(&w));
        assert_eq!(w.id("c"), Some(7));
    }

    #[test]
    fn reserved_tokens_are_not_counted() {
        let v = build_vocab(&corpus(&["<SYN> a"]), 100).unwrap();
        assert_eq!(v.len(), 6);
    }
}
