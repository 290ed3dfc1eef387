//! Deterministic synthetic corpus for evaluation and benchmarks.
//!
//! Each benchmark query pairs a rare lexical token (present in two
//! highly relevant docs) with a probe token whose embedding collides
//! exactly with a partner token planted in two semantically relevant
//! docs. The partner docs share no token with the query, so lexical
//! retrieval cannot see them while dense retrieval sees them perfectly;
//! their titles are character-close to the query for the fuzzy channel.
//! Remaining docs are filler drawn from a disjoint vocabulary.

use std::collections::{HashMap, HashSet};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::dense::{Embedder, HashingEmbedder};
use crate::error::{Error, Result};
use crate::eval::{BenchmarkQuery, QrelSet};
use crate::ingest::{ingest_record, IngestConfig};
use crate::model::Document;
use crate::query::{FilterMap, Glossary};

const COUNTRIES: [&str; 5] = ["usa", "france", "germany", "japan", "brazil"];
const PRODUCTS: [&str; 4] = ["alphacillin", "betamab", "gammazol", "deltaparin"];
const AREAS: [&str; 3] = ["oncology", "cardiology", "neurology"];
const CONTENT_TYPES: [&str; 3] = ["report", "slides", "protocol"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthParams {
    pub n_docs: usize,
    pub n_queries: usize,
    pub embed_dim: usize,
    pub embed_seed: u64,
    /// Seed for filler text and document shuffling.
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams { n_docs: 1000, n_queries: 50, embed_dim: 256, embed_seed: 0x46494E44, seed: 7 }
    }
}

#[derive(Debug)]
pub struct SynthCorpus {
    pub docs: Vec<Document>,
    pub queries: Vec<BenchmarkQuery>,
    pub qrels: QrelSet,
    pub glossary: Glossary,
    /// Per query: (query-side probe token, planted partner token).
    pub collision_pairs: Vec<(String, String)>,
    /// Per query: the rare lexical token.
    pub lexical_tokens: Vec<String>,
}

/// The single nonzero coordinate of a one-token embedding.
fn token_bucket(embedder: &HashingEmbedder, token: &str) -> Option<(usize, bool)> {
    let v = embedder.embed(token);
    let mut found = None;
    for (i, &x) in v.iter().enumerate() {
        if x != 0.0 {
            if found.is_some() {
                return None;
            }
            found = Some((i, x > 0.0));
        }
    }
    found
}

/// Probe tokens until `n` pairs of distinct tokens with bit-identical
/// embeddings are found, each pair in a bucket unused by other pairs.
pub fn find_collision_pairs(
    embedder: &HashingEmbedder,
    n: usize,
    used_buckets: &mut HashSet<usize>,
) -> Result<Vec<(String, String)>> {
    let mut by_class: HashMap<(usize, bool), Vec<String>> = HashMap::new();
    let mut pairs = Vec::new();
    for i in 0..1_000_000 {
        if pairs.len() == n {
            return Ok(pairs);
        }
        let token = format!("syn{i}");
        let Some(class) = token_bucket(embedder, &token) else { continue };
        if used_buckets.contains(&class.0) {
            continue;
        }
        let entry = by_class.entry(class).or_default();
        entry.push(token);
        if entry.len() == 2 {
            used_buckets.insert(class.0);
            pairs.push((entry[0].clone(), entry[1].clone()));
        }
    }
    Err(Error::RangeError(format!(
        "could not find {n} embedding collision pairs at dim {}",
        embedder.dim()
    )))
}

fn find_distinct_tokens(
    embedder: &HashingEmbedder,
    n: usize,
    prefix: &str,
    used_buckets: &mut HashSet<usize>,
) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    for i in 0..1_000_000 {
        if tokens.len() == n {
            return Ok(tokens);
        }
        let token = format!("{prefix}{i}");
        let Some((bucket, _)) = token_bucket(embedder, &token) else { continue };
        if used_buckets.insert(bucket) {
            tokens.push(token);
        }
    }
    Err(Error::RangeError(format!(
        "could not find {n} distinct-bucket tokens at dim {}",
        embedder.dim()
    )))
}

fn filler(rng: &mut StdRng, n: usize) -> String {
    (0..n).map(|_| format!("w{:04}", rng.gen_range(0..30u32))).collect::<Vec<_>>().join(" ")
}

fn record_line(
    index: usize,
    title: &str,
    body: &str,
) -> String {
    serde_json::json!({
        "metadata": {
            "dataset_document_number": format!("SYN-{index:05}"),
            "dataset_name": "synthetic benchmark corpus",
            "dataset_file_title": title,
            "language": "en",
            "country": COUNTRIES[index % COUNTRIES.len()],
            "product": PRODUCTS[index % PRODUCTS.len()],
            "scientific_area": AREAS[index % AREAS.len()],
            "content_type": CONTENT_TYPES[index % CONTENT_TYPES.len()],
        },
        "body": body,
    })
    .to_string()
}

/// Generate the corpus, queries, and graded judgments. Fully determined
/// by `params`.
pub fn generate(params: &SynthParams) -> Result<SynthCorpus> {
    if params.n_queries == 0 || params.n_docs < 4 * params.n_queries + 1 {
        return Err(Error::RangeError(format!(
            "need at least {} docs for {} queries",
            4 * params.n_queries + 1,
            params.n_queries
        )));
    }
    if params.embed_dim < 2 * params.n_queries {
        return Err(Error::RangeError(format!(
            "embed_dim {} cannot host {} disjoint token buckets",
            params.embed_dim,
            2 * params.n_queries
        )));
    }
    let embedder = HashingEmbedder::new(params.embed_dim, params.embed_seed)?;
    let mut used_buckets = HashSet::new();
    let collision_pairs = find_collision_pairs(&embedder, params.n_queries, &mut used_buckets)?;
    let lexical_tokens =
        find_distinct_tokens(&embedder, params.n_queries, "lex", &mut used_buckets)?;

    let mut rng = StdRng::seed_from_u64(params.seed);
    // (title, body, relevance, query index)
    let mut blueprints: Vec<(String, String, u32, Option<usize>)> = Vec::new();
    for (qi, ((qtok, dtok), lex)) in
        collision_pairs.iter().zip(&lexical_tokens).enumerate()
    {
        for copy in 1..=2 {
            blueprints.push((
                format!("Baseline Cohort Report {qi:02} Part {copy}"),
                format!("{lex} baseline cohort enrollment summary {}", filler(&mut rng, 10)),
                2,
                Some(qi),
            ));
        }
        for copy in 1..=2 {
            // Title words extend the query tokens by one character: no
            // shared token, high character similarity.
            blueprints.push((
                format!("{lex}x {qtok}x review part {copy}"),
                format!("{dtok} {dtok} {dtok} interim visuals compendium {}", filler(&mut rng, 10)),
                1,
                Some(qi),
            ));
        }
    }
    while blueprints.len() < params.n_docs {
        let k = blueprints.len();
        blueprints.push((format!("Filler Memo {k:04}"), filler(&mut rng, 15), 0, None));
    }
    // Spread special docs through the corpus deterministically.
    for i in (1..blueprints.len()).rev() {
        blueprints.swap(i, rng.gen_range(0..=i));
    }

    let config = IngestConfig::default();
    let mut docs = Vec::with_capacity(params.n_docs);
    let mut qrels = QrelSet::new();
    for (index, (title, body, relevance, query_index)) in blueprints.iter().enumerate() {
        let line = record_line(index, title, body);
        let doc = ingest_record(&line, index + 1, &config, index as u32)?;
        if let Some(qi) = query_index {
            if *relevance > 0 {
                qrels.insert(&format!("q{qi:02}"), doc.document_number(), *relevance);
            }
        }
        docs.push(doc);
    }

    let queries = collision_pairs
        .iter()
        .zip(&lexical_tokens)
        .enumerate()
        .map(|(qi, ((qtok, _), lex))| BenchmarkQuery {
            query_id: format!("q{qi:02}"),
            text: format!("{lex} {qtok}"),
            filters: FilterMap::new(),
        })
        .collect();

    Ok(SynthCorpus {
        docs,
        queries,
        qrels,
        glossary: Glossary::empty(),
        collision_pairs,
        lexical_tokens,
    })
}
