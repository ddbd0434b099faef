//! Byte-pair encoding with a `@@` continuation marker on non-final subwords.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use super::{is_special, Sentence};
use crate::{Error, Result};

pub const CONTINUATION_MARKER: &str = "@@";

const FILE_HEADER: &str = "version 1";

/// Ordered merge rules. Earlier merges take precedence when replayed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

/// Initial segmentation of a word: one symbol per character, all but the
/// last carrying the continuation marker.
fn word_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let last = chars.len().saturating_sub(1);
    chars
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if i < last {
                format!("{c}{CONTINUATION_MARKER}")
            } else {
                c.to_string()
            }
        })
        .collect()
}

fn merged_symbol(left: &str, right: &str) -> String {
    let stem = left.strip_suffix(CONTINUATION_MARKER).unwrap_or(left);
    format!("{stem}{right}")
}

/// Replaces non-overlapping occurrences of `(left, right)`, scanning left to right.
fn merge_pair<S: AsRef<str> + PartialEq<str>>(
    symbols: &[S],
    left: &str,
    right: &str,
    merged: &str,
) -> Option<Vec<String>> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut changed = false;
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == *left && symbols[i + 1] == *right {
            out.push(merged.to_owned());
            i += 2;
            changed = true;
        } else {
            out.push(symbols[i].as_ref().to_owned());
            i += 1;
        }
    }
    changed.then_some(out)
}

/// Learns `num_merges` merge rules by repeatedly merging the most frequent
/// adjacent symbol pair. Ties go to the lexicographically smallest
/// `(left, right)`; learning stops early once no pair occurs twice.
pub fn learn_bpe<'a, I>(sentences: I, num_merges: usize) -> Result<BpeModel>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let mut word_counts: BTreeMap<&str, i64> = BTreeMap::new();
    for sentence in sentences {
        for token in sentence.tokens() {
            if !is_special(token) {
                *word_counts.entry(token.as_str()).or_default() += 1;
            }
        }
    }
    if word_counts.is_empty() {
        return Err(Error::EmptyCorpus("cannot learn BPE from no words".into()));
    }

    let mut learner = Learner::default();
    for (word, count) in word_counts {
        let ids = word_symbols(word).iter().map(|s| learner.intern(s)).collect();
        learner.words.push((ids, count));
    }
    learner.count_all();

    let mut merges = Vec::new();
    while merges.len() < num_merges {
        let Some((left, right)) = learner.best_pair() else {
            break;
        };
        merges.push((
            learner.symbols[left as usize].clone(),
            learner.symbols[right as usize].clone(),
        ));
        learner.apply(left, right);
    }
    Ok(BpeModel::from_merges(merges))
}

#[derive(Default)]
struct Learner {
    symbols: Vec<String>,
    symbol_ids: HashMap<String, u32>,
    words: Vec<(Vec<u32>, i64)>,
    pair_counts: HashMap<(u32, u32), i64>,
    pair_words: HashMap<(u32, u32), HashSet<usize>>,
    heap: BinaryHeap<(i64, Reverse<(String, String)>, (u32, u32))>,
}

impl Learner {
    fn intern(&mut self, symbol: &str) -> u32 {
        if let Some(&id) = self.symbol_ids.get(symbol) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbols.push(symbol.to_owned());
        self.symbol_ids.insert(symbol.to_owned(), id);
        id
    }

    fn push(&mut self, pair: (u32, u32)) {
        let count = self.pair_counts.get(&pair).copied().unwrap_or(0);
        if count > 0 {
            let names = (
                self.symbols[pair.0 as usize].clone(),
                self.symbols[pair.1 as usize].clone(),
            );
            self.heap.push((count, Reverse(names), pair));
        }
    }

    fn count_all(&mut self) {
        for (w, (ids, count)) in self.words.iter().enumerate() {
            for pair in ids.windows(2).map(|p| (p[0], p[1])) {
                *self.pair_counts.entry(pair).or_default() += count;
                self.pair_words.entry(pair).or_default().insert(w);
            }
        }
        let pairs: Vec<_> = self.pair_counts.keys().copied().collect();
        for pair in pairs {
            self.push(pair);
        }
    }

    /// Pops stale heap entries until the top reflects a live count.
    fn best_pair(&mut self) -> Option<(u32, u32)> {
        while let Some((count, _, pair)) = self.heap.peek() {
            let live = self.pair_counts.get(pair).copied().unwrap_or(0);
            if live != *count {
                self.heap.pop();
                continue;
            }
            return (*count >= 2).then_some(*pair);
        }
        None
    }

    fn apply(&mut self, left: u32, right: u32) {
        let merged = merged_symbol(
            &self.symbols[left as usize],
            &self.symbols[right as usize],
        );
        let merged_id = self.intern(&merged);
        let mut affected: Vec<usize> = self
            .pair_words
            .remove(&(left, right))
            .unwrap_or_default()
            .into_iter()
            .collect();
        affected.sort_unstable();

        let mut touched = HashSet::new();
        for w in affected {
            let (ids, count) = &self.words[w];
            let count = *count;
            let mut out = Vec::with_capacity(ids.len());
            let mut i = 0;
            let mut changed = false;
            while i < ids.len() {
                if i + 1 < ids.len() && ids[i] == left && ids[i + 1] == right {
                    out.push(merged_id);
                    i += 2;
                    changed = true;
                } else {
                    out.push(ids[i]);
                    i += 1;
                }
            }
            if !changed {
                continue;
            }
            for pair in ids.windows(2).map(|p| (p[0], p[1])) {
                *self.pair_counts.entry(pair).or_default() -= count;
                touched.insert(pair);
            }
            for pair in out.windows(2).map(|p| (p[0], p[1])) {
                *self.pair_counts.entry(pair).or_default() += count;
                self.pair_words.entry(pair).or_default().insert(w);
                touched.insert(pair);
            }
            self.words[w].0 = out;
        }
        self.pair_counts.retain(|_, c| *c > 0);
        let mut touched: Vec<_> = touched.into_iter().collect();
        touched.sort_unstable();
        for pair in touched {
            self.push(pair);
        }
    }
}

impl BpeModel {
    pub fn from_merges(merges: Vec<(String, String)>) -> Self {
        let mut ranks = HashMap::with_capacity(merges.len());
        for (i, m) in merges.iter().enumerate() {
            ranks.entry(m.clone()).or_insert(i);
        }
        BpeModel { merges, ranks }
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn num_merges(&self) -> usize {
        self.merges.len()
    }

    /// The model restricted to its first `n` merges.
    pub fn truncated(&self, n: usize) -> BpeModel {
        BpeModel::from_merges(self.merges[..n.min(self.merges.len())].to_vec())
    }

    /// Segments one word by replaying the merges in learned order.
    pub fn segment_word(&self, word: &str) -> Vec<String> {
        if is_special(word) {
            return vec![word.to_owned()];
        }
        let mut symbols = word_symbols(word);
        let mut last_rank: Option<usize> = None;
        loop {
            // the lowest-ranked merge not yet replayed that occurs in the word
            let next = symbols
                .windows(2)
                .filter_map(|p| self.ranks.get(&(p[0].clone(), p[1].clone())).copied())
                .filter(|&r| last_rank.is_none_or(|last| r > last))
                .min();
            let Some(rank) = next else {
                break;
            };
            let (left, right) = &self.merges[rank];
            let merged = merged_symbol(left, right);
            if let Some(out) = merge_pair(&symbols, left, right, &merged) {
                symbols = out;
            }
            last_rank = Some(rank);
        }
        symbols
    }

    pub fn apply(&self, sentence: &Sentence) -> Sentence {
        Sentence::from_tokens(
            sentence
                .tokens()
                .iter()
                .flat_map(|w| self.segment_word(w)),
        )
    }

    /// Segments many sentences, caching per word type.
    pub fn apply_all<'a, I>(&self, sentences: I) -> Vec<Sentence>
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        let mut cache: HashMap<&'a str, Vec<String>> = HashMap::new();
        sentences
            .into_iter()
            .map(|s| {
                let mut out = Vec::new();
                for w in s.tokens() {
                    let seg = cache
                        .entry(w.as_str())
                        .or_insert_with(|| self.segment_word(w));
                    out.extend(seg.iter().cloned());
                }
                Sentence::from_tokens(out)
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = String::from(FILE_HEADER);
        text.push('\n');
        for (l, r) in &self.merges {
            text.push_str(l);
            text.push(' ');
            text.push_str(r);
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<BpeModel> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(FILE_HEADER) {
            return Err(Error::MalformedCorpus {
                path: path.to_owned(),
                line: 1,
                reason: format!("expected header {FILE_HEADER:?}"),
            });
        }
        let mut merges = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in lines.enumerate() {
            let mut parts = line.split(' ');
            let (Some(l), Some(r), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::MalformedCorpus {
                    path: path.to_owned(),
                    line: i + 2,
                    reason: "expected \"left right\"".into(),
                });
            };
            if l.is_empty() || r.is_empty() || !seen.insert((l, r)) {
                return Err(Error::MalformedCorpus {
                    path: path.to_owned(),
                    line: i + 2,
                    reason: "empty or duplicate merge".into(),
                });
            }
            merges.push((l.to_owned(), r.to_owned()));
        }
        Ok(BpeModel::from_merges(merges))
    }
}

/// Joins `@@`-marked subwords back into words.
///
/// Returns the sentence and whether the last token still carried a dangling
/// continuation marker (it is joined anyway).
pub fn decode_bpe<S: AsRef<str>>(tokens: &[S]) -> (Sentence, bool) {
    let mut words = Vec::new();
    let mut current = String::new();
    for token in tokens {
        let token = token.as_ref();
        match token.strip_suffix(CONTINUATION_MARKER) {
            Some(stem) if !stem.is_empty() => current.push_str(stem),
            _ => {
                current.push_str(token);
                words.push(std::mem::take(&mut current));
            }
        }
    }
    let dangling = !current.is_empty();
    if dangling {
        words.push(current);
    }
    (Sentence::from_tokens(words), dangling)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn merges(m: &BpeModel) -> Vec<(&str, &str)> {
        m.merges()
            .iter()
            .map(|(l, r)| (l.as_str(), r.as_str()))
            .collect()
    }

    #[test]
    fn low_lowest_two_merges() {
        let mut corpus = vec![Sentence::from_text("low"); 5];
        corpus.extend(vec![Sentence::from_text("lowest"); 2]);
        let m = learn_bpe(&corpus, 2).unwrap();
        assert_eq!(merges(&m), [("l@@", "o@@"), ("lo@@", "w")]);
    }

    #[test]
    fn zero_merges_is_character_model() {
        let m = learn_bpe(&[Sentence::from_text("abc abd")], 0).unwrap();
        assert_eq!(m.num_merges(), 0);
        assert_eq!(
            m.apply(&Sentence::from_text("ab")).tokens(),
            ["a@@", "b"]
        );
    }

    #[test]
    fn single_occurrence_pairs_are_not_merged() {
        let m = learn_bpe(&[Sentence::from_text("ab")], 1).unwrap();
        assert_eq!(m.num_merges(), 0);
    }

    #[test]
    fn replay_low() {
        let m = BpeModel::from_merges(vec![
            ("l@@".into(), "o@@".into()),
            ("lo@@".into(), "w".into()),
        ]);
        assert_eq!(m.apply(&Sentence::from_text("low")).tokens(), ["low"]);
        assert_eq!(
            m.apply(&Sentence::from_text("lower")).tokens(),
            ["lo@@", "w@@", "e@@", "r"]
        );
    }

    #[test]
    fn specials_pass_through() {
        let m = learn_bpe(&[Sentence::from_text("ab ab ab")], 5).unwrap();
        let out = m.apply(&Sentence::from_text("<SYN> ab"));
        assert_eq!(out.tokens(), ["<SYN>", "ab"]);
    }

    #[test]
    fn decode_examples() {
        let (s, dangling) = decode_bpe(&["lo@@", "w", "c@@", "a@@", "t"]);
        assert_eq!(s.to_string(), "low cat");
        assert!(!dangling);
        let (s, dangling) = decode_bpe(&["low"]);
        assert_eq!(s.to_string(), "low");
        assert!(!dangling);
        let (s, dangling) = decode_bpe(&["a@@"]);
        assert_eq!(s.to_string(), "a");
        assert!(dangling);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = [Sentence::from_text("lower lowest newer newest low low")];
        let m = learn_bpe(&corpus, 10).unwrap();
        let p = dir.path().join("bpe");
        m.save(&p).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("version 1\n"));
        assert_eq!(BpeModel::load(&p).unwrap(), m);

        fs::write(&p, "version 2\n").unwrap();
        assert!(BpeModel::load(&p).is_err());
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(learn_bpe(&[], 3).is_err());
    }
}
