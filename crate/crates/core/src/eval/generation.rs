use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::textproc::tokenize;

/// Substituted for a zero modified precision so the geometric mean stays finite.
pub const BLEU_EPSILON: f64 = 1e-9;

const MAX_ORDER: usize = 4;

fn counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut m = HashMap::new();
    for g in tokens.windows(n) {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

/// Corpus BLEU over pre-tokenized pairs.
pub(crate) fn bleu_tokens(pairs: &[(Vec<String>, Vec<String>)]) -> f64 {
    let mut matched = [0u64; MAX_ORDER];
    let mut total = [0u64; MAX_ORDER];
    let mut ref_total = [0u64; MAX_ORDER];
    let (mut c, mut r) = (0usize, 0usize);
    for (cand, reference) in pairs {
        c += cand.len();
        r += reference.len();
        for n in 1..=MAX_ORDER {
            let cc = counts(cand, n);
            let rc = counts(reference, n);
            matched[n - 1] += cc
                .iter()
                .map(|(g, k)| (*k).min(rc.get(g).copied().unwrap_or(0)))
                .sum::<u64>();
            total[n - 1] += cand.len().saturating_sub(n - 1) as u64;
            ref_total[n - 1] += reference.len().saturating_sub(n - 1) as u64;
        }
    }
    if c == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 0..MAX_ORDER {
        let p = if total[n] == 0 {
            // Both sides too short for this order: nothing to disagree on.
            if ref_total[n] == 0 {
                1.0
            } else {
                BLEU_EPSILON
            }
        } else if matched[n] == 0 {
            BLEU_EPSILON
        } else {
            matched[n] as f64 / total[n] as f64
        };
        log_sum += p.ln() / MAX_ORDER as f64;
    }
    let bp = if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    (bp * log_sum.exp()).clamp(0.0, 1.0)
}

/// Corpus-level BLEU-4 with uniform weights, brevity penalty and
/// add-epsilon smoothing. One reference per candidate.
pub fn bleu<C: AsRef<str>, R: AsRef<str>>(candidates: &[C], references: &[R]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::InvalidArgument(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::EmptyInput("bleu corpus"));
    }
    let pairs: Vec<_> = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| {
            (
                tokenize(c.as_ref()).into_inner(),
                tokenize(r.as_ref()).into_inner(),
            )
        })
        .collect();
    Ok(bleu_tokens(&pairs))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L from the longest common token subsequence.
pub fn rouge_l(candidate: &str, reference: &str) -> RougeScore {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    if c.is_empty() || r.is_empty() {
        return RougeScore {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        };
    }
    let lcs = lcs_len(&c, &r) as f64;
    let precision = lcs / c.len() as f64;
    let recall = lcs / r.len() as f64;
    let f1 = if lcs == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    RougeScore {
        precision,
        recall,
        f1,
    }
}

/// Mean number of whitespace-separated tokens.
pub fn mean_words<S: AsRef<str>>(texts: &[S]) -> Result<f64> {
    if texts.is_empty() {
        return Err(Error::EmptyInput("no texts to count"));
    }
    let words: usize = texts
        .iter()
        .map(|t| t.as_ref().split_whitespace().count())
        .sum();
    Ok(words as f64 / texts.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_is_one() {
        let xs = ["the court held", "a", "one two three four five six"];
        assert_eq!(bleu(&xs, &xs).unwrap(), 1.0);
    }

    #[test]
    fn five_pair_fixture() {
        // Tally: 1g 19/20, 2g 8/15, 3g 3/10, 4g 1/6; c = 20, r = 22.
        let cands = [
            "the cat sat on the mat",
            "a b c d",
            "x y",
            "p q r s t",
            "one two three",
        ];
        let refs = [
            "the cat is on the mat",
            "a b c d",
            "x y z",
            "t s r q p",
            "one two four three",
        ];
        let hand = (-0.1f64).exp()
            * ((19.0f64 / 20.0) * (8.0 / 15.0) * (3.0 / 10.0) * (1.0 / 6.0)).powf(0.25);
        let got = bleu(&cands, &refs).unwrap();
        assert!((got - hand).abs() < 1e-12);
        assert!((got - 0.3609887239109).abs() < 1e-6);
    }

    #[test]
    fn zero_four_gram_overlap_hits_floor() {
        let got = bleu(&["a b c d e"], &["a b c x d e"]).unwrap();
        assert!(got <= BLEU_EPSILON.powf(0.25));
        assert!(got > 0.0);
    }

    #[test]
    fn bleu_errors() {
        assert!(bleu::<&str, &str>(&[], &[]).is_err());
        assert!(bleu(&["a"], &["a", "b"]).is_err());
        assert_eq!(bleu(&[""], &["a b"]).unwrap(), 0.0);
    }

    #[test]
    fn rouge_fixture() {
        let s = rouge_l("a b c d", "a c d e");
        assert_eq!((s.precision, s.recall, s.f1), (0.75, 0.75, 0.75));
        let d = rouge_l("a b", "c d");
        assert_eq!(d.f1, 0.0);
        assert_eq!(rouge_l("", "x").f1, 0.0);
        let same = rouge_l("the same words", "the same words");
        assert_eq!((same.precision, same.recall, same.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn word_means() {
        assert_eq!(mean_words(&["a b", "c"]).unwrap(), 1.5);
        assert_eq!(mean_words(&["", "  "]).unwrap(), 0.0);
        assert!(mean_words::<&str>(&[]).is_err());
    }

    proptest! {
        #[test]
        fn bleu_self_is_one(words in prop::collection::vec("[a-z]{1,4}", 1..30)) {
            let text = words.join(" ");
            prop_assert_eq!(bleu(&[&text], &[&text]).unwrap(), 1.0);
        }

        #[test]
        fn rouge_bounded(a in "[a-c ]{0,30}", b in "[a-c ]{0,30}") {
            let s = rouge_l(&a, &b);
            for v in [s.precision, s.recall, s.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
