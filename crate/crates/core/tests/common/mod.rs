//! Oracles shared by several integration test targets.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use selftrain::text::Sentence;

const MARK: &str = "@@";

fn split_word(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    chars
        .iter()
        .enumerate()
        .map(|(i, c)| if i + 1 < chars.len() { format!("{c}{MARK}") } else { c.to_string() })
        .collect()
}

pub fn naive_learn(sentences: &[Sentence], num_merges: usize) -> Vec<(String, String)> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for s in sentences {
        for w in s.tokens() {
            *counts.entry(w.clone()).or_default() += 1;
        }
    }
    let mut words: Vec<(Vec<String>, usize)> =
        counts.into_iter().map(|(w, c)| (split_word(&w), c)).collect();
    let mut merges = Vec::new();
    while merges.len() < num_merges {
        let mut pairs: BTreeMap<(String, String), usize> = BTreeMap::new();
        for (syms, c) in &words {
            for w in syms.windows(2) {
                *pairs.entry((w[0].clone(), w[1].clone())).or_default() += c;
            }
        }
        // max count, then smallest pair: BTreeMap iterates in ascending order
        let mut best: Option<((String, String), usize)> = None;
        for (pair, c) in pairs {
            if best.as_ref().is_none_or(|(_, bc)| c > *bc) {
                best = Some((pair, c));
            }
        }
        let Some(((l, r), c)) = best else { break };
        if c < 2 {
            break;
        }
        let joined = format!("{}{r}", l.strip_suffix(MARK).unwrap());
        for (syms, _) in &mut words {
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == l && syms[i + 1] == r {
                    out.push(joined.clone());
                    i += 2;
                } else {
                    out.push(syms[i].clone());
                    i += 1;
                }
            }
            *syms = out;
        }
        merges.push((l, r));
    }
    merges
}

pub fn random_corpus(rng: &mut ChaCha8Rng, words: usize) -> Vec<Sentence> {
    let alphabet: Vec<char> = "abcde".chars().collect();
    let lexicon: Vec<String> = (0..12)
        .map(|_| {
            let len = rng.random_range(1..=6);
            (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
        })
        .collect();
    let mut out = Vec::new();
    let mut left = words;
    while left > 0 {
        let n = rng.random_range(1..=left.min(7));
        let toks: Vec<String> = (0..n).map(|_| lexicon[rng.random_range(0..lexicon.len())].clone()).collect();
        out.push(Sentence::from_tokens(toks));
        left -= n;
    }
    out
}
