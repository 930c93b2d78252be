//! Deterministic synthetic inputs for the benchmarks.

use lpr_core::{Passage, PassageCollection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Passages of 20 to 80 words drawn from a skewed vocabulary.
pub fn passages(n: usize, vocab: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(20..=80);
            (0..len)
                .map(|_| {
                    let r: f64 = rng.random();
                    format!("w{}", (r * r * vocab as f64) as usize)
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

pub fn collection(texts: &[String]) -> PassageCollection {
    PassageCollection::from_passages(
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Passage::new(format!("p{i}"), t.clone()))
            .collect(),
    )
    .expect("synthetic ids are unique")
}

/// Short queries made of words sampled from random passages.
pub fn queries(texts: &[String], n: usize, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let words: Vec<&str> = texts[rng.random_range(0..texts.len())].split(' ').collect();
            let q: Vec<&str> = (0..8)
                .map(|_| words[rng.random_range(0..words.len())])
                .collect();
            (format!("q{i}"), q.join(" "))
        })
        .collect()
}

/// Row-major `n x dim` matrix with entries in `[-1, 1)`.
pub fn vectors(n: usize, dim: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}
