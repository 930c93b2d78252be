use std::collections::HashMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use lpr_bench::{collection, passages, queries};
use lpr_core::eval::{bleu, ndcg_at_k, paired_t_test, recall_at_k, rouge_l, Qrels, RetrievalRun};
use lpr_core::sparse::build_index;
use lpr_core::{Bm25Params, PassageHandle, TokenizerConfig};

fn generation(c: &mut Criterion) {
    let refs = passages(500, 2_000, 5);
    let cands = passages(500, 2_000, 6);
    c.bench_function("bleu_500", |b| {
        b.iter(|| black_box(bleu(&cands, &refs).unwrap()))
    });
    c.bench_function("rouge_l_500", |b| {
        b.iter(|| {
            for (x, y) in cands.iter().zip(&refs) {
                black_box(rouge_l(x, y));
            }
        })
    });
}

fn retrieval(c: &mut Criterion) {
    let texts = passages(5_000, 3_000, 7);
    let ix = build_index(
        &collection(&texts),
        Bm25Params::default(),
        TokenizerConfig::default(),
    )
    .unwrap();
    let qs = queries(&texts, 1_000, 8);
    let run = RetrievalRun::from_lists("bm25", ix.search_batch(&qs, 100)).unwrap();
    let gold: HashMap<String, PassageHandle> = qs
        .iter()
        .enumerate()
        .map(|(i, (qid, _))| (qid.clone(), PassageHandle((i * 37 % texts.len()) as u32)))
        .collect();
    let qrels = Qrels::new(gold);
    c.bench_function("ndcg@10_1000q", |b| {
        b.iter(|| black_box(ndcg_at_k(&run, &qrels, 10).unwrap()))
    });
    c.bench_function("recall@10_1000q", |b| {
        b.iter(|| black_box(recall_at_k(&run, &qrels, 10).unwrap()))
    });

    let a: Vec<f64> = (0..1_000)
        .map(|i| ((i * 7919) % 1000) as f64 / 1000.0)
        .collect();
    let b2: Vec<f64> = (0..1_000)
        .map(|i| ((i * 104_729) % 1000) as f64 / 1000.0)
        .collect();
    c.bench_function("paired_t_test_1000", |b| {
        b.iter(|| black_box(paired_t_test(&a, &b2).unwrap()))
    });
}

criterion_group!(benches, generation, retrieval);
criterion_main!(benches);
