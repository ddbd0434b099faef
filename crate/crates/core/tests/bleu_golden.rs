//! BLEU against hand-computed values. Each expected score was worked out on
//! hand from the clipped n-gram counts listed next to it.

use selftrain::metrics::{bleu_corpus, bleu_sentence, Smoothing};
use selftrain::text::Sentence;

fn s(text: &str) -> Sentence {
    Sentence::from_text(text)
}

fn corpus(hyps: &[&str], refs: &[&str], smoothing: Smoothing) -> f64 {
    let h: Vec<Sentence> = hyps.iter().map(|t| s(t)).collect();
    let r: Vec<Sentence> = refs.iter().map(|t| s(t)).collect();
    bleu_corpus(&h, &r, smoothing).unwrap().score
}

const TOL: f64 = 0.05;

#[test]
fn cat_on_the_mat() {
    let b = bleu_corpus(
        &[s("the cat sat on the mat")],
        &[s("the cat is on the mat")],
        Smoothing::None,
    )
    .unwrap();
    // 5/6, 3/5, 1/4, 0/3
    let expected = [5.0 / 6.0, 3.0 / 5.0, 1.0 / 4.0, 0.0];
    for (p, e) in b.precisions.iter().zip(expected) {
        assert!((p.unwrap() - e).abs() < 1e-12);
    }
    assert_eq!(b.score, 0.0);
    // add-one on n >= 2: (5/6 * 4/6 * 2/5 * 1/4)^(1/4) = 0.48549
    let smoothed = bleu_sentence(&s("the cat sat on the mat"), &s("the cat is on the mat")).unwrap();
    assert!((smoothed.score - 48.549).abs() < TOL, "{}", smoothed.score);
}

#[test]
fn short_hypothesis_pays_brevity_penalty() {
    // p1 = p2 = 1, no 3/4-grams, BP = exp(1 - 6/2)
    let got = corpus(&["the cat"], &["the cat sat on the mat"], Smoothing::None);
    assert!((got - 13.534).abs() < TOL, "{got}");
}

#[test]
fn two_sentence_corpus() {
    // counts pooled: 7/8, 4/6, 2/4, 1/2; BP = exp(1 - 9/8); 54.535
    let got = corpus(&["a b c d", "a b x d"], &["a b c d", "a b c d e"], Smoothing::None);
    assert!((got - 54.535).abs() < TOL, "{got}");
}

#[test]
fn clipping_repeated_tokens() {
    // unigram clipped to 1/4; bigrams 0/3 so unsmoothed is zero
    assert_eq!(corpus(&["the the the the"], &["the cat"], Smoothing::None), 0.0);
    // add-one: 1/4, 1/4, 1/3, 1/2 -> 31.948
    let got = corpus(&["the the the the"], &["the cat"], Smoothing::Add1);
    assert!((got - 31.948).abs() < TOL, "{got}");
}

#[test]
fn three_token_smoothed() {
    // add-one: 2/3, 2/3, 1/2, no 4-grams -> 60.571
    let got = corpus(&["a b c"], &["a b d"], Smoothing::Add1);
    assert!((got - 60.571).abs() < TOL, "{got}");
}

#[test]
fn identity_and_disjoint() {
    let refs = ["the cat sat on the mat", "a b c d e f", "x y"];
    assert_eq!(corpus(&refs, &refs, Smoothing::None), 100.0);
    assert_eq!(corpus(&["p q r s", "t u"], &["a b c d", "e f"], Smoothing::None), 0.0);
}
