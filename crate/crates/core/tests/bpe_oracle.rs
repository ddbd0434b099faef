//! BPE learning against a naive learner that recounts every adjacent pair
//! from scratch each round, plus round-trip and monotonicity properties.

mod common;

use common::{naive_learn, random_corpus};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selftrain::text::{decode_bpe, learn_bpe, BpeModel, Sentence};

#[test]
fn matches_naive_learner_on_ten_corpora() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words = rng.random_range(10..=50);
        let corpus = random_corpus(&mut rng, words);
        assert!(corpus.iter().map(Sentence::len).sum::<usize>() <= 50);
        for merges in [1, 5, 40] {
            let model = learn_bpe(&corpus, merges).unwrap();
            assert_eq!(model.merges(), naive_learn(&corpus, merges).as_slice(), "seed {seed}");
        }
    }
}

#[test]
fn low_lowest_example() {
    let mut words = vec!["low"; 5];
    words.extend(["lowest"; 2]);
    let corpus = [Sentence::from_tokens(words)];
    let model = learn_bpe(&corpus, 2).unwrap();
    assert_eq!(model.merges(), naive_learn(&corpus, 2).as_slice());
    assert_eq!(model.merges()[0], ("l@@".to_owned(), "o@@".to_owned()));
    assert_eq!(model.apply(&Sentence::from_text("low")).tokens(), ["low"]);
}

fn word_strategy() -> impl Strategy<Value = String> {
    // '@' is excluded: a word ending in the marker cannot round-trip
    proptest::string::string_regex("[a-zA-Z0-9éß,.!?'-]{1,10}").unwrap()
}

fn sentence_strategy() -> impl Strategy<Value = Sentence> {
    proptest::collection::vec(word_strategy(), 1..12).prop_map(Sentence::from_tokens)
}

fn trained_model() -> BpeModel {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    learn_bpe(&random_corpus(&mut rng, 400), 60).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn decode_inverts_apply(s in sentence_strategy()) {
        let model = trained_model();
        let (back, dangling) = decode_bpe(model.apply(&s).tokens());
        prop_assert!(!dangling);
        prop_assert_eq!(back, s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn more_merges_never_add_tokens(s in sentence_strategy()) {
        let model = trained_model();
        let mut prev = usize::MAX;
        for n in 0..=model.num_merges() {
            let len = model.truncated(n).apply(&s).len();
            prop_assert!(len <= prev);
            prev = len;
        }
    }
}
