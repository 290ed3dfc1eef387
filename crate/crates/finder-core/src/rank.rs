//! The search pipeline: exact-match shortcut, hard filtering,
//! multi-channel retrieval (sparse BM42 over chunks, metadata keyword
//! BM42, dense ANN), reciprocal-rank fusion for candidate selection, and a
//! 30% fuzzy / 70% normalized-sparse weighted final score.
//!
//! Dense similarity influences candidate selection and tie-breaking but
//! does not enter the final score directly.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dense::{DenseIndex, Embedder, HashingEmbedder};
use crate::error::{Error, Result};
use crate::fuzzy;
use crate::hnsw::HnswParams;
use crate::ingest::IngestConfig;
use crate::model::{Document, FILTER_FIELDS, KEYWORD_FIELDS};
use crate::query::{
    normalize_value, FilterMap, Glossary, QueryParser, StructuredQuery, Vocabularies,
    INFERABLE_FIELDS,
};
use crate::sparse::{Scoring, SparseIndex};
use crate::text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub ingest: IngestConfig,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    pub embed_dim: usize,
    pub embed_seed: u64,
    pub hnsw: HnswParams,
    /// Minimum cosine for applying an ambiguous glossary expansion.
    pub glossary_threshold: f64,
    pub rrf_k: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            ingest: IngestConfig::default(),
            bm25_k1: 1.2,
            bm25_b: 0.75,
            embed_dim: 256,
            embed_seed: 0x46494E44,
            hnsw: HnswParams::default(),
            glossary_threshold: 0.15,
            rrf_k: 60.0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.ingest.validate()?;
        if self.embed_dim < 8 {
            return Err(Error::RangeError(format!("embed_dim {} < 8", self.embed_dim)));
        }
        if !(0.0..=1.0).contains(&self.glossary_threshold) {
            return Err(Error::RangeError("glossary_threshold outside [0,1]".into()));
        }
        if self.rrf_k < 1.0 {
            return Err(Error::RangeError("rrf_k must be ≥ 1".into()));
        }
        if self.bm25_k1 < 0.0 || !(0.0..=1.0).contains(&self.bm25_b) {
            return Err(Error::RangeError("bm25 parameters out of range".into()));
        }
        Ok(())
    }

    /// FNV-1a 64 over the canonical JSON encoding.
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("config serializes");
        fnv1a64(&json)
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Hybrid,
    Sparse,
    Dense,
    /// Currently identical to hybrid; reserved for certainty-driven routing.
    Auto,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "hybrid" => Ok(Mode::Hybrid),
            "sparse" => Ok(Mode::Sparse),
            "dense" => Ok(Mode::Dense),
            "auto" => Ok(Mode::Auto),
            other => Err(format!("unknown mode {other:?} (hybrid|sparse|dense|auto)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchedVia {
    ExactMatch,
    Hybrid,
    MetadataKeyword,
}

impl MatchedVia {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchedVia::ExactMatch => "exact_match",
            MatchedVia::Hybrid => "hybrid",
            MatchedVia::MetadataKeyword => "metadata_keyword",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreComponents {
    pub sparse_raw: f64,
    pub sparse_norm: f64,
    pub dense_cos: f64,
    pub rrf: f64,
    /// Token-set ratio scaled to [0,1].
    pub fuzzy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub doc_id: u32,
    pub document_number: String,
    pub title: String,
    /// Final fused score; 1.0 for exact matches.
    pub score: f64,
    pub components: ScoreComponents,
    pub matched_via: MatchedVia,
    pub rank: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub hits: Vec<ScoredHit>,
    pub timings_ms: BTreeMap<String, f64>,
    pub applied_filters: FilterMap,
    /// Pipeline stage outcomes: "completed", "skipped", "hit", or "miss".
    pub stages: BTreeMap<String, String>,
}

/// Divide every score by the maximum. An empty list, or one whose maximum
/// is ≤ 0, normalizes to all zeros.
pub fn normalize_scores(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if raw.is_empty() || max <= 0.0 {
        vec![0.0; raw.len()]
    } else {
        raw.iter().map(|s| s / max).collect()
    }
}

/// Reciprocal-rank fusion: `score(d) = Σ 1/(k + rank_d)` over the lists
/// containing `d`, ranks 1-based. Sorted descending, ties by ascending id.
pub fn rrf_fuse(lists: &[Vec<u32>], k: f64) -> Vec<(u32, f64)> {
    debug_assert!(k >= 1.0);
    let mut scores: HashMap<u32, f64> = HashMap::new();
    for list in lists {
        for (i, &doc) in list.iter().enumerate() {
            *scores.entry(doc).or_insert(0.0) += 1.0 / (k + (i + 1) as f64);
        }
    }
    let mut out: Vec<(u32, f64)> = scores.into_iter().collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

/// Final fusion: 30% fuzzy (0..=100) and 70% normalized sparse (0..=1).
pub fn fuse_weighted(fuzzy_score: f64, sparse_norm: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&fuzzy_score) {
        return Err(Error::RangeError(format!("fuzzy score {fuzzy_score} outside [0,100]")));
    }
    if !(0.0..=1.0).contains(&sparse_norm) {
        return Err(Error::RangeError(format!("sparse_norm {sparse_norm} outside [0,1]")));
    }
    Ok(0.3 * (fuzzy_score / 100.0) + 0.7 * sparse_norm)
}

/// Per-channel accumulator: best 1-based rank and best score per document.
#[derive(Default)]
struct ChannelUnion {
    best: HashMap<u32, (usize, f64)>,
}

impl ChannelUnion {
    fn offer(&mut self, doc: u32, rank: usize, score: f64) {
        let entry = self.best.entry(doc).or_insert((rank, score));
        if rank < entry.0 {
            entry.0 = rank;
        }
        if score > entry.1 {
            entry.1 = score;
        }
    }

    /// Merged ranking: best rank ascending, then score descending, then id.
    fn ranked(&self, limit: usize) -> Vec<u32> {
        let mut entries: Vec<(&u32, &(usize, f64))> = self.best.iter().collect();
        entries.sort_by(|a, b| {
            a.1 .0
                .cmp(&b.1 .0)
                .then(b.1 .1.total_cmp(&a.1 .1))
                .then(a.0.cmp(b.0))
        });
        entries.into_iter().take(limit).map(|(&doc, _)| doc).collect()
    }

    fn score(&self, doc: u32) -> f64 {
        self.best.get(&doc).map_or(0.0, |&(_, s)| s)
    }

    fn contains(&self, doc: u32) -> bool {
        self.best.contains_key(&doc)
    }
}

/// An immutable, fully built search engine over one corpus snapshot.
#[derive(Debug)]
pub struct SearchEngine {
    config: EngineConfig,
    created_at: String,
    docs: Vec<Document>,
    doc_numbers: HashMap<String, u32>,
    /// normalized value -> doc ids, over number, dataset name, and title.
    exact_index: HashMap<String, Vec<u32>>,
    chunk_doc: Vec<u32>,
    sparse: SparseIndex,
    dense: DenseIndex,
    embedder: HashingEmbedder,
    glossary: Glossary,
    vocabularies: Vocabularies,
}

impl SearchEngine {
    /// Build every index from ingested documents. `created_at` is carried
    /// into snapshots, so building at a fixed time is fully reproducible.
    pub fn build(
        docs: Vec<Document>,
        glossary: Glossary,
        config: EngineConfig,
        created_at: String,
    ) -> Result<Self> {
        config.validate()?;
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let sparse = SparseIndex::build(&docs, config.bm25_k1, config.bm25_b)?;
        let embedder = HashingEmbedder::new(config.embed_dim, config.embed_seed)?;
        let mut dense = DenseIndex::new(config.embed_dim, config.hnsw);
        let mut next_chunk = 0u32;
        for doc in &docs {
            for chunk in &doc.chunks {
                dense.push(next_chunk, &embedder.embed(&chunk.text))?;
                next_chunk += 1;
            }
        }
        dense.build_graph(config.embed_seed)?;
        let vocabularies = build_vocabularies(&docs);
        Self::from_parts(docs, glossary, vocabularies, sparse, dense, config, created_at)
    }

    /// Assemble an engine from prebuilt parts (the snapshot-load path);
    /// only derived in-memory tables are recomputed.
    pub fn from_parts(
        docs: Vec<Document>,
        glossary: Glossary,
        vocabularies: Vocabularies,
        sparse: SparseIndex,
        dense: DenseIndex,
        config: EngineConfig,
        created_at: String,
    ) -> Result<Self> {
        config.validate()?;
        let embedder = HashingEmbedder::new(config.embed_dim, config.embed_seed)?;
        let mut doc_numbers = HashMap::new();
        let mut exact_index: HashMap<String, Vec<u32>> = HashMap::new();
        let mut chunk_doc = Vec::new();
        for (i, doc) in docs.iter().enumerate() {
            if doc.doc_id != i as u32 {
                return Err(Error::CorruptIndex {
                    file: "documents.jsonl".into(),
                    message: format!("doc at position {i} has id {}", doc.doc_id),
                });
            }
            if doc_numbers.insert(doc.document_number().to_string(), doc.doc_id).is_some() {
                return Err(Error::DuplicateDocumentNumber(doc.document_number().to_string()));
            }
            let mut keys: Vec<String> = [
                doc.document_number(),
                doc.metadata.dataset_name.as_str(),
                doc.title(),
            ]
            .iter()
            .map(|v| text::normalize_exact(v))
            .collect();
            keys.sort();
            keys.dedup();
            for key in keys {
                exact_index.entry(key).or_default().push(doc.doc_id);
            }
            for _ in &doc.chunks {
                chunk_doc.push(doc.doc_id);
            }
        }
        if sparse.n_chunks() as usize != chunk_doc.len() || dense.len() != chunk_doc.len() {
            return Err(Error::CorruptIndex {
                file: "sparse.idx".into(),
                message: format!(
                    "chunk counts disagree: documents {}, sparse {}, dense {}",
                    chunk_doc.len(),
                    sparse.n_chunks(),
                    dense.len()
                ),
            });
        }
        Ok(SearchEngine {
            config,
            created_at,
            docs,
            doc_numbers,
            exact_index,
            chunk_doc,
            sparse,
            dense,
            embedder,
            glossary,
            vocabularies,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn created_at(&self) -> &str {
        &self.created_at
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn doc(&self, doc_id: u32) -> Option<&Document> {
        self.docs.get(doc_id as usize)
    }

    pub fn doc_by_number(&self, number: &str) -> Option<&Document> {
        self.doc_numbers.get(number).and_then(|&id| self.doc(id))
    }

    pub fn sparse(&self) -> &SparseIndex {
        &self.sparse
    }

    pub fn dense(&self) -> &DenseIndex {
        &self.dense
    }

    pub fn embedder(&self) -> &HashingEmbedder {
        &self.embedder
    }

    pub fn glossary(&self) -> &Glossary {
        &self.glossary
    }

    pub fn vocabularies(&self) -> &Vocabularies {
        &self.vocabularies
    }

    pub fn parser(&self) -> QueryParser<'_> {
        QueryParser {
            glossary: &self.glossary,
            vocabularies: &self.vocabularies,
            embedder: &self.embedder,
            threshold: self.config.glossary_threshold,
        }
    }

    pub fn parse_query(&self, raw: &str, user_filters: &FilterMap) -> Result<StructuredQuery> {
        self.parser().parse(raw, user_filters)
    }

    /// Documents whose number, dataset name, or title equals the raw query
    /// after normalization (casefold, trim, collapse whitespace).
    pub fn exact_match_lookup(&self, raw_query: &str) -> Vec<u32> {
        self.exact_index
            .get(&text::normalize_exact(raw_query))
            .cloned()
            .unwrap_or_default()
    }

    /// Conjunctive, punctuation- and case-insensitive equality filters.
    /// Returns a doc-id mask. Unknown fields are rejected.
    pub fn apply_filters(&self, filters: &FilterMap) -> Result<Vec<bool>> {
        for field in filters.keys() {
            if !FILTER_FIELDS.contains(&field.as_str()) {
                return Err(Error::UnknownField(field.clone()));
            }
        }
        let wanted: Vec<(&str, String)> = filters
            .iter()
            .map(|(f, v)| (f.as_str(), normalize_value(v)))
            .collect();
        Ok(self
            .docs
            .iter()
            .map(|doc| {
                wanted.iter().all(|(field, value)| {
                    doc.metadata.field(field).map(normalize_value).as_deref()
                        == Some(value.as_str())
                })
            })
            .collect())
    }

    /// Run the full pipeline. See the module docs for stage order; an
    /// exact match short-circuits everything after stage 2.
    pub fn search(
        &self,
        raw_query: &str,
        user_filters: &FilterMap,
        mode: Mode,
        top_k: usize,
    ) -> Result<SearchResponse> {
        if top_k == 0 {
            return Err(Error::RangeError("top_k must be ≥ 1".into()));
        }
        let mut timings = BTreeMap::new();
        let mut stages = BTreeMap::new();

        let t = Instant::now();
        let parsed = self.parser().parse(raw_query, user_filters)?;
        timings.insert("parse".to_string(), ms(t));
        stages.insert("parse".to_string(), "completed".to_string());

        let t = Instant::now();
        let exact = self.exact_match_lookup(raw_query);
        timings.insert("exact".to_string(), ms(t));
        if !exact.is_empty() {
            stages.insert("exact".to_string(), "hit".to_string());
            for stage in ["sparse", "dense", "fuse"] {
                stages.insert(stage.to_string(), "skipped".to_string());
            }
            let hits = exact
                .iter()
                .take(top_k)
                .enumerate()
                .map(|(i, &doc_id)| {
                    let doc = &self.docs[doc_id as usize];
                    ScoredHit {
                        doc_id,
                        document_number: doc.document_number().to_string(),
                        title: doc.title().to_string(),
                        score: 1.0,
                        components: ScoreComponents::default(),
                        matched_via: MatchedVia::ExactMatch,
                        rank: i as u32 + 1,
                    }
                })
                .collect();
            return Ok(SearchResponse {
                hits,
                timings_ms: timings,
                applied_filters: parsed.filters,
                stages,
            });
        }
        stages.insert("exact".to_string(), "miss".to_string());

        let mask = self.apply_filters(&parsed.filters)?;
        let pool_size = 4 * top_k;

        let run_sparse = !matches!(mode, Mode::Dense);
        let run_dense = !matches!(mode, Mode::Sparse);

        let mut sparse_union = ChannelUnion::default();
        let mut chunk_matched: HashSet<u32> = HashSet::new();
        let sparse_list = if run_sparse {
            let t = Instant::now();
            for reformulation in &parsed.reformulations {
                let tokens = text::tokenize(reformulation);
                if tokens.is_empty() {
                    continue;
                }
                for (rank0, (doc, score)) in self
                    .sparse
                    .score_docs(&tokens, Scoring::Bm42)
                    .into_iter()
                    .filter(|&(doc, _)| mask[doc as usize])
                    .take(pool_size)
                    .enumerate()
                {
                    sparse_union.offer(doc, rank0 + 1, score);
                    chunk_matched.insert(doc);
                }
                let fields: Vec<String> = KEYWORD_FIELDS.iter().map(|f| f.to_string()).collect();
                for (rank0, (doc, score)) in self
                    .sparse
                    .search_keywords(&tokens, &fields)?
                    .into_iter()
                    .filter(|&(doc, _)| mask[doc as usize])
                    .take(pool_size)
                    .enumerate()
                {
                    sparse_union.offer(doc, rank0 + 1, score);
                }
            }
            timings.insert("sparse".to_string(), ms(t));
            stages.insert("sparse".to_string(), "completed".to_string());
            sparse_union.ranked(pool_size)
        } else {
            stages.insert("sparse".to_string(), "skipped".to_string());
            Vec::new()
        };

        let mut dense_union = ChannelUnion::default();
        let dense_list = if run_dense {
            let t = Instant::now();
            for reformulation in &parsed.reformulations {
                let query_vec = self.embedder.embed(reformulation);
                let chunk_hits = self.dense.ann_search(&query_vec, pool_size)?;
                let mut rank0 = 0usize;
                let mut seen: HashSet<u32> = HashSet::new();
                for (chunk_id, cos) in chunk_hits {
                    // Like the sparse channel, only positive affinity
                    // qualifies as a candidate.
                    if cos <= 0.0 {
                        continue;
                    }
                    let doc = self.chunk_doc[chunk_id as usize];
                    if !mask[doc as usize] || !seen.insert(doc) {
                        continue;
                    }
                    dense_union.offer(doc, rank0 + 1, cos);
                    rank0 += 1;
                }
            }
            timings.insert("dense".to_string(), ms(t));
            stages.insert("dense".to_string(), "completed".to_string());
            dense_union.ranked(pool_size)
        } else {
            stages.insert("dense".to_string(), "skipped".to_string());
            Vec::new()
        };

        let t = Instant::now();
        let fused = rrf_fuse(&[sparse_list, dense_list], self.config.rrf_k);
        let pool: Vec<(u32, f64)> = fused.into_iter().take(pool_size).collect();
        let raw: Vec<f64> = pool.iter().map(|&(doc, _)| sparse_union.score(doc)).collect();
        let norms = normalize_scores(&raw);

        let mut hits: Vec<ScoredHit> = pool
            .iter()
            .zip(&norms)
            .map(|(&(doc_id, rrf), &sparse_norm)| {
                let doc = &self.docs[doc_id as usize];
                let fuzzy_score = fuzzy::token_set_ratio(&parsed.main_query, doc.title());
                let score = fuse_weighted(fuzzy_score, sparse_norm)?;
                let matched_via = if chunk_matched.contains(&doc_id) || dense_union.contains(doc_id)
                {
                    MatchedVia::Hybrid
                } else {
                    MatchedVia::MetadataKeyword
                };
                Ok(ScoredHit {
                    doc_id,
                    document_number: doc.document_number().to_string(),
                    title: doc.title().to_string(),
                    score,
                    components: ScoreComponents {
                        sparse_raw: sparse_union.score(doc_id),
                        sparse_norm,
                        dense_cos: dense_union.score(doc_id),
                        rrf,
                        fuzzy: fuzzy_score / 100.0,
                    },
                    matched_via,
                    rank: 0,
                })
            })
            .collect::<Result<_>>()?;
        hits.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(b.components.rrf.total_cmp(&a.components.rrf))
                .then(b.components.dense_cos.total_cmp(&a.components.dense_cos))
                .then(a.doc_id.cmp(&b.doc_id))
        });
        hits.truncate(top_k);
        for (i, hit) in hits.iter_mut().enumerate() {
            hit.rank = i as u32 + 1;
        }
        timings.insert("fuse".to_string(), ms(t));
        stages.insert("fuse".to_string(), "completed".to_string());

        Ok(SearchResponse { hits, timings_ms: timings, applied_filters: parsed.filters, stages })
    }
}

/// Distinct normalized values of the inferable metadata fields.
pub fn build_vocabularies(docs: &[Document]) -> Vocabularies {
    let mut vocabularies = Vocabularies::new();
    for doc in docs {
        for field in INFERABLE_FIELDS {
            if let Some(value) = doc.metadata.field(field) {
                let normalized = normalize_value(value);
                if !normalized.is_empty() {
                    vocabularies.entry(field.to_string()).or_default().insert(normalized);
                }
            }
        }
    }
    vocabularies
}

/// Renumber documents (and their chunks) to dense ids 0..n in order.
pub fn reassign_doc_ids(docs: &mut [Document]) {
    for (i, doc) in docs.iter_mut().enumerate() {
        doc.doc_id = i as u32;
        for chunk in &mut doc.chunks {
            chunk.doc_id = i as u32;
        }
    }
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}
