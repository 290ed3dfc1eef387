//! Benchmarks for the three retrieval layers: sparse lexical scoring,
//! dense ANN search, and the full hybrid pipeline.
//!
//! Run with `cargo bench -p finder-bench`; add `-- --test` for a quick
//! single-pass smoke run.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use finder_bench::bench_engine;
use finder_core::dense::DenseIndex;
use finder_core::query::FilterMap;
use finder_core::sparse::Scoring;
use finder_core::text::tokenize;
use finder_core::{HnswParams, Mode};

fn random_unit(rng: &mut StdRng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| (x / n) as f32).collect();
        }
    }
}

fn sparse_scoring(c: &mut Criterion) {
    let (engine, queries) = bench_engine(2_000, 25, 64);
    let token_lists: Vec<Vec<String>> = queries.iter().map(|q| tokenize(q)).collect();

    let mut group = c.benchmark_group("sparse_2k_docs");
    for (name, scoring) in
        [("bm42", Scoring::Bm42), ("bm25", Scoring::Bm25), ("tfidf", Scoring::TfIdf)]
    {
        group.bench_function(name, |b| {
            let mut i = 0;
            b.iter(|| {
                let tokens = &token_lists[i % token_lists.len()];
                i += 1;
                black_box(engine.sparse().score_docs(tokens, scoring))
            })
        });
    }
    group.finish();
}

fn dense_search(c: &mut Criterion) {
    let dim = 64;
    let mut rng = StdRng::seed_from_u64(7);
    let mut index = DenseIndex::new(dim, HnswParams::default());
    for i in 0..10_000u32 {
        index.push(i, &random_unit(&mut rng, dim)).expect("unit vector accepted");
    }
    index.build_graph(7).expect("graph builds");
    let probes: Vec<Vec<f32>> = (0..64).map(|_| random_unit(&mut rng, dim)).collect();

    let mut group = c.benchmark_group("dense_10k_vectors");
    group.bench_function("ann_top10", |b| {
        let mut i = 0;
        b.iter(|| {
            let q = &probes[i % probes.len()];
            i += 1;
            black_box(index.ann_search(q, 10).expect("ann search"))
        })
    });
    group.bench_function("exact_top10", |b| {
        let mut i = 0;
        b.iter(|| {
            let q = &probes[i % probes.len()];
            i += 1;
            black_box(index.knn_exact(q, None, 10).expect("exact knn"))
        })
    });
    group.finish();
}

fn full_pipeline(c: &mut Criterion) {
    let (engine, queries) = bench_engine(2_000, 25, 64);
    let no_filters = FilterMap::new();

    let mut group = c.benchmark_group("search_2k_docs");
    for (name, mode) in
        [("hybrid", Mode::Hybrid), ("sparse_only", Mode::Sparse), ("dense_only", Mode::Dense)]
    {
        group.bench_function(name, |b| {
            let mut i = 0;
            b.iter(|| {
                let q = &queries[i % queries.len()];
                i += 1;
                black_box(engine.search(q, &no_filters, mode, 10).expect("search ok"))
            })
        });
    }
    group.finish();
}

criterion_group!(benches, sparse_scoring, dense_search, full_pipeline);
criterion_main!(benches);
