//! Hybrid lexical/semantic search engine for desk-scale document
//! collections.
//!
//! The crate is organized as a pipeline:
//!
//! - [`ingest`]: corpus records -> validated, chunked, tagged [`model::Document`]s
//! - [`sparse`]: inverted-index retrieval (TF-IDF, BM25, BM42)
//! - [`dense`]: hashed embeddings with exact and approximate (HNSW) nearest
//!   neighbor search
//! - [`query`]: query understanding (filters, glossary expansion, reformulations)
//! - [`rank`]: the search pipeline tying the channels together with rank
//!   fusion and fuzzy reranking
//! - [`eval`]: offline retrieval-quality evaluation
//! - [`storage`]: on-disk snapshots of a built engine
//!
//! Everything is deterministic: the same corpus, configuration, and query
//! produce byte-identical results, including across snapshot save/load.

pub mod dense;
pub mod error;
pub mod eval;
pub mod fuzzy;
mod hnsw;
pub mod ingest;
pub mod model;
pub mod query;
pub mod rank;
pub mod sparse;
pub mod storage;
pub mod synth;
pub mod text;

pub use hnsw::HnswParams;

pub use error::{Error, Result};
pub use model::{Chunk, CorpusStats, Document, Metadata, Modality, Tag, TagProvenance};
pub use rank::{
    EngineConfig, MatchedVia, Mode, ScoredHit, SearchEngine, SearchResponse,
};
