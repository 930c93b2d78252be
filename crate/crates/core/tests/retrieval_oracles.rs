mod common;

use std::collections::HashMap;

use common::{direct_bm25, random_corpus};

use lpr_core::dense::encode_embeddings;
use lpr_core::sparse::build_index;
use lpr_core::{
    Bm25Params, EmbeddingStore, Passage, PassageCollection, PassageHandle, SparseIndex,
    TokenizerConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn collection(texts: &[String]) -> PassageCollection {
    PassageCollection::from_passages(
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Passage::new(format!("d{i}"), t.clone()))
            .collect(),
    )
    .unwrap()
}

#[test]
fn bm25_matches_direct_formula_and_exhaustive_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for corpus in 0..20 {
        let n_docs = rng.random_range(1..=100);
        let texts = random_corpus(&mut rng, n_docs, 40);
        let k1 = [1.2, 1.5, 0.9][corpus % 3];
        let b = [0.75, 0.0, 1.0][corpus % 3];
        let c = collection(&texts);
        let ix = build_index(
            &c,
            Bm25Params::new(k1, b).unwrap(),
            TokenizerConfig::default(),
        )
        .unwrap();
        let docs: Vec<Vec<&str>> = texts.iter().map(|t| t.split(' ').collect()).collect();
        let tok = ix.tokenizer();
        for _ in 0..50 {
            let qlen = rng.random_range(1..=6);
            let qtext: Vec<String> = (0..qlen)
                .map(|_| format!("w{}", rng.random_range(0..45)))
                .collect();
            let qterms: Vec<&str> = qtext.iter().map(String::as_str).collect();
            let expected = direct_bm25(&docs, &qterms, k1, b);
            let tokens = tok.tokenize(&qtext.join(" "));
            let mut all: Vec<(f64, u32)> = Vec::new();
            for (h, want) in expected.iter().enumerate() {
                let got = ix.score(&tokens, PassageHandle(h as u32)).unwrap();
                assert!(
                    (got - want).abs() <= 1e-9,
                    "corpus {corpus} doc {h}: {got} vs {want}"
                );
                if qterms.iter().any(|t| docs[h].contains(t)) {
                    all.push((got, h as u32));
                }
            }
            all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for k in [1, 10, n_docs + 5] {
                let list = ix.search("q", &tokens, k);
                let want: Vec<u32> = all.iter().take(k).map(|x| x.1).collect();
                let got: Vec<u32> = list.handles().map(|h| h.0).collect();
                assert_eq!(got, want, "corpus {corpus} k {k}");
            }
        }
    }
}

#[test]
fn bm25_ties_break_by_handle() {
    let texts: Vec<String> = vec!["a b".into(), "c d".into(), "a b".into(), "a b".into()];
    let ix = build_index(
        &collection(&texts),
        Bm25Params::default(),
        TokenizerConfig::default(),
    )
    .unwrap();
    let list = ix.search_text("q", "a", 10);
    let handles: Vec<u32> = list.handles().map(|h| h.0).collect();
    assert_eq!(handles, vec![0, 2, 3]);
}

#[test]
fn batch_search_equals_single_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let texts = random_corpus(&mut rng, 80, 30);
    let ix = build_index(
        &collection(&texts),
        Bm25Params::default(),
        TokenizerConfig::default(),
    )
    .unwrap();
    let queries: Vec<(String, String)> = (0..40)
        .map(|i| (format!("q{i}"), texts[i * 2 % texts.len()].clone()))
        .collect();
    let batch = ix.search_batch(&queries, 10);
    for ((qid, text), list) in queries.iter().zip(&batch) {
        assert_eq!(*list, ix.search_text(qid, text, 10));
    }
}

#[test]
fn saved_index_searches_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let texts = random_corpus(&mut rng, 60, 30);
    let tok = TokenizerConfig {
        stem: true,
        stopwords: true,
    };
    let ix = build_index(&collection(&texts), Bm25Params::new(1.2, 0.6).unwrap(), tok).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ix.spix");
    ix.save(&path).unwrap();
    let loaded = SparseIndex::load(&path).unwrap();
    assert_eq!(loaded.to_bytes(), ix.to_bytes());
    assert_eq!(loaded.params(), ix.params());
    assert_eq!(loaded.tokenizer_config(), tok);
    for t in texts.iter().take(20) {
        assert_eq!(loaded.search_text("q", t, 10), ix.search_text("q", t, 10));
    }
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn dense_top_k_matches_full_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let n = rng.random_range(1..200);
        let dim = rng.random_range(2..32);
        let raw: Vec<f32> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let store = EmbeddingStore::from_rows(dim, raw.clone()).unwrap();
        for q in 0..20 {
            let query: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let k = [1, 5, 10, n + 3][q % 4];
            let list = store.top_k("q", &query, k).unwrap();
            // Exact order from the store's own rows, plus an f64 cosine check.
            let mut all: Vec<(f64, u32)> = (0..n)
                .map(|h| {
                    let row = store.row(PassageHandle(h as u32)).unwrap();
                    let qn: f64 = query
                        .iter()
                        .map(|x| (*x as f64).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    let s: f64 = row
                        .iter()
                        .zip(&query)
                        .map(|(x, y)| *x as f64 * *y as f64)
                        .sum::<f64>()
                        / qn;
                    (s, h as u32)
                })
                .collect();
            all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let want: Vec<u32> = all.iter().take(k).map(|x| x.1).collect();
            let got: Vec<u32> = list.handles().map(|h| h.0).collect();
            assert_eq!(got, want);
            for e in &list.entries {
                let h = e.handle.0 as usize;
                let exact = cosine(&raw[h * dim..(h + 1) * dim], &query);
                assert!((e.score - exact).abs() < 1e-5, "{} vs {exact}", e.score);
            }
        }
    }
}

#[test]
fn dense_file_round_trip_and_batch() {
    let dim = 4;
    let raw = vec![
        1.0, 0.0, 0.0, 0.0, //
        0.0, 2.0, 0.0, 0.0, //
        1.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 5.0,
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.emb");
    std::fs::write(&path, encode_embeddings(dim, &raw, false)).unwrap();
    let store = lpr_core::dense::load_embeddings(&path).unwrap();
    assert_eq!((store.len(), store.dim()), (4, 4));
    let queries = vec![
        ("a".to_string(), vec![1.0f32, 0.0, 0.0, 0.0]),
        ("b".to_string(), vec![0.0f32, 1.0, 0.0, 0.0]),
    ];
    let lists = store.top_k_batch(&queries, 2).unwrap();
    let top: HashMap<&str, Vec<u32>> = lists
        .iter()
        .map(|l| (l.qid.as_str(), l.handles().map(|h| h.0).collect()))
        .collect();
    assert_eq!(top["a"], vec![0, 2]);
    assert_eq!(top["b"], vec![1, 2]);
    store.save(&dir.path().join("again.emb")).unwrap();
    let again = lpr_core::dense::load_embeddings(&dir.path().join("again.emb")).unwrap();
    assert_eq!(again.to_bytes(), store.to_bytes());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bm25_results_are_sorted_and_distinct(
        docs in prop::collection::vec("[a-e]( [a-e]){0,8}", 1..30),
        query in "[a-f]( [a-f]){0,4}",
        k in 1usize..40,
    ) {
        let ix = build_index(&collection(&docs), Bm25Params::default(), TokenizerConfig::default()).unwrap();
        let list = ix.search_text("q", &query, k);
        prop_assert!(list.len() <= k.min(docs.len()));
        for w in list.entries.windows(2) {
            prop_assert!(w[0].score > w[1].score
                || (w[0].score == w[1].score && w[0].handle < w[1].handle));
        }
        let mut seen = std::collections::HashSet::new();
        prop_assert!(list.entries.iter().all(|e| seen.insert(e.handle)));
        prop_assert!(list.entries.iter().all(|e| e.score > 0.0));
    }
}
