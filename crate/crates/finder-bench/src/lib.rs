//! Shared fixtures for the criterion benchmarks.

use finder_core::synth::{generate, SynthParams};
use finder_core::{EngineConfig, SearchEngine};

/// Build a fully indexed engine over a deterministic synthetic corpus and
/// return it with the benchmark query texts.
pub fn bench_engine(n_docs: usize, n_queries: usize, embed_dim: usize) -> (SearchEngine, Vec<String>) {
    let params = SynthParams { n_docs, n_queries, embed_dim, ..SynthParams::default() };
    let corpus = generate(&params).expect("bench corpus generates");
    let queries = corpus.queries.iter().map(|q| q.text.clone()).collect();
    let config = EngineConfig {
        embed_dim: params.embed_dim,
        embed_seed: params.embed_seed,
        ..EngineConfig::default()
    };
    let engine = SearchEngine::build(
        corpus.docs,
        corpus.glossary,
        config,
        "2026-01-01T00:00:00Z".into(),
    )
    .expect("bench engine builds");
    (engine, queries)
}
