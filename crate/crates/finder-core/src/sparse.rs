//! Sparse (lexical) retrieval over an inverted chunk index.
//!
//! Statistics are chunk-granular: document frequency counts chunks, and a
//! document's score for a query is the maximum over its chunks. Three
//! scorers share the same smoothed idf:
//!
//! `idf(t) = ln(1 + (N - n_t + 0.5) / (n_t + 0.5))` with `N` = chunk count.
//!
//! - TF-IDF: cosine between `tf * idf` vectors of query and chunk.
//! - BM25: `sum idf(t) * tf*(k1+1) / (tf + k1*(1 - b + b*len/avg_len))`.
//! - BM42: `sum idf(t) * w(t, c)` where `w(t, c) = (tf/(tf+1)) / sum_{t' in c} (tf'/(tf'+1))`,
//!   an attention-like weight that favors terms carrying more of the
//!   chunk's mass instead of raw counts.
//!
//! Repeated query terms contribute once to BM25/BM42 and via their term
//! frequency to the TF-IDF query vector.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::{is_keyword_field, Document};
use crate::text;

const MAGIC: &[u8; 6] = b"FNDR1S";
const VERSION: u32 = 1;
const FILE: &str = "sparse.idx";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scoring {
    TfIdf,
    Bm25,
    Bm42,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ChunkEntry {
    doc_id: u32,
    ordinal: u32,
    len: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Posting {
    chunk: u32,
    tf: u32,
}

/// Inverted index plus the per-chunk statistics the scorers need.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseIndex {
    k1: f64,
    b: f64,
    n_docs: u32,
    chunks: Vec<ChunkEntry>,
    avg_chunk_len: f64,
    postings: BTreeMap<String, Vec<Posting>>,
    /// Per-chunk L2 norm of the tf*idf vector (TF-IDF denominator).
    chunk_norms: Vec<f64>,
    /// Per-chunk `sum tf/(tf+1)` (BM42 denominator).
    chunk_mass: Vec<f64>,
    /// field -> term -> (doc_id, tf) postings over metadata keyword fields.
    keywords: BTreeMap<String, BTreeMap<String, Vec<Posting>>>,
}

impl SparseIndex {
    pub fn build(docs: &[Document], k1: f64, b: f64) -> Result<Self> {
        if docs.is_empty() || docs.iter().all(|d| d.chunks.is_empty()) {
            return Err(Error::EmptyCorpus);
        }
        let mut chunks = Vec::new();
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut total_len = 0u64;
        for doc in docs {
            for chunk in &doc.chunks {
                let chunk_id = chunks.len() as u32;
                let tokens = text::tokenize(&chunk.text);
                let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
                for t in &tokens {
                    *counts.entry(t).or_insert(0) += 1;
                }
                for (term, tf) in counts {
                    postings
                        .entry(term.to_string())
                        .or_default()
                        .push(Posting { chunk: chunk_id, tf });
                }
                let len = tokens.len() as u32;
                total_len += len as u64;
                chunks.push(ChunkEntry {
                    doc_id: doc.doc_id,
                    ordinal: chunk.ordinal,
                    len,
                });
            }
        }
        let avg_chunk_len = total_len as f64 / chunks.len() as f64;

        let mut keywords: BTreeMap<String, BTreeMap<String, Vec<Posting>>> = BTreeMap::new();
        for doc in docs {
            for (field, value) in doc.metadata.keyword_values() {
                let mut counts: BTreeMap<String, u32> = BTreeMap::new();
                for t in text::tokenize(value) {
                    *counts.entry(t).or_insert(0) += 1;
                }
                let by_term = keywords.entry(field.to_string()).or_default();
                for (term, tf) in counts {
                    by_term
                        .entry(term)
                        .or_default()
                        .push(Posting { chunk: doc.doc_id, tf });
                }
            }
        }

        let mut index = SparseIndex {
            k1,
            b,
            n_docs: docs.len() as u32,
            chunks,
            avg_chunk_len,
            postings,
            chunk_norms: Vec::new(),
            chunk_mass: Vec::new(),
            keywords,
        };
        index.finalize();
        Ok(index)
    }

    /// Recompute the derived per-chunk arrays from the postings. Iterates
    /// terms in sorted order so the float accumulation order (and thus the
    /// exact bit pattern) is identical after build and after load.
    fn finalize(&mut self) {
        let n = self.chunks.len();
        let mut norms_sq = vec![0.0f64; n];
        let mut mass = vec![0.0f64; n];
        for (term, plist) in &self.postings {
            let idf = self.idf(term);
            for p in plist {
                let w = p.tf as f64 * idf;
                norms_sq[p.chunk as usize] += w * w;
                mass[p.chunk as usize] += p.tf as f64 / (p.tf as f64 + 1.0);
            }
        }
        self.chunk_norms = norms_sq.into_iter().map(f64::sqrt).collect();
        self.chunk_mass = mass;
    }

    pub fn n_docs(&self) -> u32 {
        self.n_docs
    }

    pub fn n_chunks(&self) -> u32 {
        self.chunks.len() as u32
    }

    pub fn avg_chunk_len(&self) -> f64 {
        self.avg_chunk_len
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n_t = self.postings.get(term).map_or(0, Vec::len) as f64;
        let n = self.chunks.len() as f64;
        (1.0 + (n - n_t + 0.5) / (n_t + 0.5)).ln()
    }

    /// Chunk ids with a positive score for `query_tokens`, sorted by score
    /// descending then chunk id ascending.
    pub fn score_chunks(&self, query_tokens: &[String], scoring: Scoring) -> Vec<(u32, f64)> {
        let mut query_tf: BTreeMap<&str, u32> = BTreeMap::new();
        for t in query_tokens {
            *query_tf.entry(t).or_insert(0) += 1;
        }

        let mut acc: HashMap<u32, f64> = HashMap::new();
        let query_norm = match scoring {
            Scoring::TfIdf => query_tf
                .iter()
                .map(|(term, &tf)| {
                    let w = tf as f64 * self.idf(term);
                    w * w
                })
                .sum::<f64>()
                .sqrt(),
            _ => 0.0,
        };

        for (term, &qtf) in &query_tf {
            let Some(plist) = self.postings.get(*term) else { continue };
            let idf = self.idf(term);
            for p in plist {
                let tf = p.tf as f64;
                let contribution = match scoring {
                    Scoring::TfIdf => (qtf as f64 * idf) * (tf * idf),
                    Scoring::Bm25 => {
                        let len = self.chunks[p.chunk as usize].len as f64;
                        let denom = tf + self.k1 * (1.0 - self.b + self.b * len / self.avg_chunk_len);
                        idf * tf * (self.k1 + 1.0) / denom
                    }
                    Scoring::Bm42 => {
                        let mass = self.chunk_mass[p.chunk as usize];
                        if mass > 0.0 {
                            idf * (tf / (tf + 1.0)) / mass
                        } else {
                            0.0
                        }
                    }
                };
                *acc.entry(p.chunk).or_insert(0.0) += contribution;
            }
        }

        let mut out: Vec<(u32, f64)> = acc
            .into_iter()
            .map(|(chunk, raw)| {
                let score = match scoring {
                    Scoring::TfIdf => {
                        let denom = query_norm * self.chunk_norms[chunk as usize];
                        if denom > 0.0 {
                            raw / denom
                        } else {
                            0.0
                        }
                    }
                    _ => raw,
                };
                (chunk, score)
            })
            .filter(|&(_, s)| s > 0.0)
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }

    /// Document scores: the best chunk score per document, sorted by score
    /// descending then doc id ascending. Zero-score documents are omitted.
    pub fn score_docs(&self, query_tokens: &[String], scoring: Scoring) -> Vec<(u32, f64)> {
        let mut best: HashMap<u32, f64> = HashMap::new();
        for (chunk, score) in self.score_chunks(query_tokens, scoring) {
            let doc = self.chunks[chunk as usize].doc_id;
            let entry = best.entry(doc).or_insert(f64::NEG_INFINITY);
            if score > *entry {
                *entry = score;
            }
        }
        let mut out: Vec<(u32, f64)> = best.into_iter().collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }

    /// BM42 over metadata keyword fields. The requested fields' values are
    /// merged into one token bag per document; document frequency and the
    /// BM42 mass are computed over those bags. Fields outside the keyword
    /// set are rejected.
    pub fn search_keywords(&self, query_tokens: &[String], fields: &[String]) -> Result<Vec<(u32, f64)>> {
        for field in fields {
            if !is_keyword_field(field) {
                return Err(Error::UnknownField(field.clone()));
            }
        }
        // term -> doc -> tf merged across the requested fields.
        let mut merged: BTreeMap<&str, BTreeMap<u32, u32>> = BTreeMap::new();
        for field in fields {
            let Some(by_term) = self.keywords.get(field) else { continue };
            for (term, plist) in by_term {
                let docs = merged.entry(term).or_default();
                for p in plist {
                    *docs.entry(p.chunk).or_insert(0) += p.tf;
                }
            }
        }
        let mut mass: HashMap<u32, f64> = HashMap::new();
        for docs in merged.values() {
            for (&doc, &tf) in docs {
                *mass.entry(doc).or_insert(0.0) += tf as f64 / (tf as f64 + 1.0);
            }
        }

        let n = self.n_docs as f64;
        let mut unique: Vec<&str> = query_tokens.iter().map(String::as_str).collect();
        unique.sort_unstable();
        unique.dedup();

        let mut acc: HashMap<u32, f64> = HashMap::new();
        for term in unique {
            let Some(docs) = merged.get(term) else { continue };
            let n_t = docs.len() as f64;
            let idf = (1.0 + (n - n_t + 0.5) / (n_t + 0.5)).ln();
            for (&doc, &tf) in docs {
                let tf = tf as f64;
                *acc.entry(doc).or_insert(0.0) += idf * (tf / (tf + 1.0)) / mass[&doc];
            }
        }
        let mut out: Vec<(u32, f64)> = acc.into_iter().filter(|&(_, s)| s > 0.0).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(out)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.k1.to_le_bytes())?;
        w.write_all(&self.b.to_le_bytes())?;
        w.write_all(&self.n_docs.to_le_bytes())?;
        w.write_all(&(self.chunks.len() as u32).to_le_bytes())?;
        w.write_all(&self.avg_chunk_len.to_le_bytes())?;
        for c in &self.chunks {
            w.write_all(&c.doc_id.to_le_bytes())?;
            w.write_all(&c.ordinal.to_le_bytes())?;
            w.write_all(&c.len.to_le_bytes())?;
        }
        w.write_all(&(self.postings.len() as u32).to_le_bytes())?;
        for (term, plist) in &self.postings {
            write_str(w, term)?;
            w.write_all(&(plist.len() as u32).to_le_bytes())?;
            let mut prev = 0u32;
            for p in plist {
                // Chunk ids are strictly increasing within a list; store deltas.
                w.write_all(&(p.chunk - prev).to_le_bytes())?;
                prev = p.chunk;
                w.write_all(&p.tf.to_le_bytes())?;
                // The BM42 weight is serialized for external consumers but is
                // derivable from tf, so load recomputes it in f64 and scoring
                // never loses precision to this f32.
                let weight =
                    (p.tf as f64 / (p.tf as f64 + 1.0) / self.chunk_mass[p.chunk as usize]) as f32;
                w.write_all(&weight.to_le_bytes())?;
            }
        }
        w.write_all(&(self.keywords.len() as u32).to_le_bytes())?;
        for (field, by_term) in &self.keywords {
            write_str(w, field)?;
            w.write_all(&(by_term.len() as u32).to_le_bytes())?;
            for (term, plist) in by_term {
                write_str(w, term)?;
                w.write_all(&(plist.len() as u32).to_le_bytes())?;
                let mut prev = 0u32;
                for p in plist {
                    w.write_all(&(p.chunk - prev).to_le_bytes())?;
                    prev = p.chunk;
                    w.write_all(&p.tf.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::VersionMismatch { expected: VERSION, got: version });
        }
        let k1 = read_f64(r)?;
        let b = read_f64(r)?;
        let n_docs = read_u32(r)?;
        let n_chunks = read_u32(r)? as usize;
        let avg_chunk_len = read_f64(r)?;
        let mut chunks = Vec::with_capacity(n_chunks.min(1 << 20));
        for _ in 0..n_chunks {
            chunks.push(ChunkEntry {
                doc_id: read_u32(r)?,
                ordinal: read_u32(r)?,
                len: read_u32(r)?,
            });
        }
        let n_terms = read_u32(r)? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..n_terms {
            let term = read_str(r)?;
            let n = read_u32(r)? as usize;
            let mut plist = Vec::with_capacity(n.min(1 << 20));
            let mut prev = 0u32;
            for _ in 0..n {
                let delta = read_u32(r)?;
                let chunk = prev
                    .checked_add(delta)
                    .ok_or_else(|| corrupt("posting delta overflow"))?;
                prev = chunk;
                let tf = read_u32(r)?;
                let _weight = read_f32(r)?;
                if chunk as usize >= chunks.len() {
                    return Err(corrupt(format!("posting for {term:?} points past chunk table")));
                }
                plist.push(Posting { chunk, tf });
            }
            postings.insert(term, plist);
        }
        let n_fields = read_u32(r)? as usize;
        let mut keywords = BTreeMap::new();
        for _ in 0..n_fields {
            let field = read_str(r)?;
            let n_terms = read_u32(r)? as usize;
            let mut by_term = BTreeMap::new();
            for _ in 0..n_terms {
                let term = read_str(r)?;
                let n = read_u32(r)? as usize;
                let mut plist = Vec::with_capacity(n.min(1 << 20));
                let mut prev = 0u32;
                for _ in 0..n {
                    let delta = read_u32(r)?;
                    let doc = prev
                        .checked_add(delta)
                        .ok_or_else(|| corrupt("posting delta overflow"))?;
                    prev = doc;
                    plist.push(Posting { chunk: doc, tf: read_u32(r)? });
                }
                by_term.insert(term, plist);
            }
            keywords.insert(field, by_term);
        }
        let mut index = SparseIndex {
            k1,
            b,
            n_docs,
            chunks,
            avg_chunk_len,
            postings,
            chunk_norms: Vec::new(),
            chunk_mass: Vec::new(),
            keywords,
        };
        index.finalize();
        Ok(index)
    }
}

fn corrupt(message: impl Into<String>) -> Error {
    Error::CorruptIndex { file: FILE.to_string(), message: message.into() }
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_f32(r: &mut impl Read) -> Result<f32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(f32::from_le_bytes(buf))
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > (1 << 20) {
        return Err(corrupt(format!("string length {len} out of range")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| corrupt("non-utf8 string"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::chunk_text;
    use crate::model::{Metadata, Modality};

    fn doc(doc_id: u32, title: &str, body: &str, max: u32) -> Document {
        let mut metadata = Metadata::default();
        metadata.dataset_document_number = format!("D-{doc_id}");
        metadata.dataset_name = "toy".into();
        metadata.dataset_file_title = title.into();
        Document {
            doc_id,
            metadata,
            modality: Modality::Text,
            body: body.to_string(),
            tags: vec![],
            chunks: chunk_text(doc_id, body, max, 0).unwrap(),
        }
    }

    /// Four chunks over three documents:
    ///   chunk 0 (doc 0): "the quick brown fox"
    ///   chunk 1 (doc 1): "the lazy dog sleeps"
    ///   chunk 2 (doc 1): "the dog barks loud"
    ///   chunk 3 (doc 2): "quick quick fox runs"
    fn toy() -> SparseIndex {
        let docs = vec![
            doc(0, "Quick fox report", "the quick brown fox", 16),
            doc(1, "Dog behavior study", "the lazy dog sleeps the dog barks loud", 4),
            doc(2, "Fox speed trial", "quick quick fox runs", 16),
        ];
        SparseIndex::build(&docs, 1.2, 0.75).unwrap()
    }

    fn q(terms: &[&str]) -> Vec<String> {
        terms.iter().map(|s| s.to_string()).collect()
    }

    fn chunk_score(index: &SparseIndex, query: &[&str], scoring: Scoring, chunk: u32) -> f64 {
        index
            .score_chunks(&q(query), scoring)
            .into_iter()
            .find(|&(c, _)| c == chunk)
            .map_or(0.0, |(_, s)| s)
    }

    #[test]
    fn toy_stats() {
        let index = toy();
        assert_eq!(index.n_docs(), 3);
        assert_eq!(index.n_chunks(), 4);
        assert_eq!(index.avg_chunk_len(), 4.0);
    }

    // Reference values below were computed once with an independent
    // arbitrary-precision script and frozen.

    #[test]
    fn idf_frozen_values() {
        let index = toy();
        assert!((index.idf("quick") - 0.693147180559945).abs() < 1e-9);
        assert!((index.idf("the") - 0.356674943938732).abs() < 1e-9);
        assert!((index.idf("never-indexed") - 2.302585092994046).abs() < 1e-9);
    }

    #[test]
    fn bm25_frozen_values() {
        let index = toy();
        assert!((chunk_score(&index, &["quick", "fox"], Scoring::Bm25, 0) - 1.386294361119891).abs() < 1e-9);
        assert!((chunk_score(&index, &["quick", "fox"], Scoring::Bm25, 3) - 1.646224553829870).abs() < 1e-9);
        assert_eq!(chunk_score(&index, &["quick", "fox"], Scoring::Bm25, 1), 0.0);
        assert!((chunk_score(&index, &["the", "dog"], Scoring::Bm25, 0) - 0.356674943938732).abs() < 1e-9);
        assert!((chunk_score(&index, &["the", "dog"], Scoring::Bm25, 1) - 1.049822124498678).abs() < 1e-9);
        assert!((chunk_score(&index, &["the", "dog"], Scoring::Bm25, 2) - 1.049822124498678).abs() < 1e-9);
        assert!((chunk_score(&index, &["lazy", "dog", "barks"], Scoring::Bm25, 1) - 1.897119984885881).abs() < 1e-9);
        assert!((chunk_score(&index, &["lazy", "dog", "barks"], Scoring::Bm25, 2) - 1.897119984885881).abs() < 1e-9);
    }

    #[test]
    fn bm42_frozen_values() {
        let index = toy();
        assert!((chunk_score(&index, &["quick", "fox"], Scoring::Bm42, 0) - 0.346573590279973).abs() < 1e-9);
        assert!((chunk_score(&index, &["quick", "fox"], Scoring::Bm42, 3) - 0.485203026391962).abs() < 1e-9);
        assert!((chunk_score(&index, &["the", "dog"], Scoring::Bm42, 1) - 0.262455531124669).abs() < 1e-9);
        assert!((chunk_score(&index, &["lazy", "dog", "barks"], Scoring::Bm42, 1) - 0.474279996221470).abs() < 1e-9);
    }

    #[test]
    fn tf_idf_frozen_values() {
        let index = toy();
        assert!((chunk_score(&index, &["quick", "fox"], Scoring::TfIdf, 0) - 0.615350533889428).abs() < 1e-9);
        assert!((chunk_score(&index, &["quick", "fox"], Scoring::TfIdf, 3) - 0.749202081002641).abs() < 1e-9);
        assert!((chunk_score(&index, &["the", "dog"], Scoring::TfIdf, 0) - 0.102445625271686).abs() < 1e-9);
        assert!((chunk_score(&index, &["the", "dog"], Scoring::TfIdf, 1) - 0.416274877773572).abs() < 1e-9);
        assert!((chunk_score(&index, &["lazy", "dog", "barks"], Scoring::TfIdf, 1) - 0.560627888937960).abs() < 1e-9);
    }

    #[test]
    fn doc_scores_take_best_chunk() {
        let index = toy();
        let docs = index.score_docs(&q(&["the", "dog"]), Scoring::Bm25);
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].0, 1);
        assert!((docs[0].1 - 1.049822124498678).abs() < 1e-9);
        assert_eq!(docs[1].0, 0);
    }

    #[test]
    fn no_hit_query_is_empty() {
        let index = toy();
        assert!(index.score_docs(&q(&["zebra"]), Scoring::Bm25).is_empty());
        assert!(index.score_docs(&[], Scoring::Bm42).is_empty());
    }

    #[test]
    fn duplicate_query_terms_count_once_for_bm25() {
        let index = toy();
        let once = index.score_docs(&q(&["dog"]), Scoring::Bm25);
        let twice = index.score_docs(&q(&["dog", "dog"]), Scoring::Bm25);
        assert_eq!(once, twice);
    }

    #[test]
    fn scores_are_positive_and_sorted() {
        let index = toy();
        for scoring in [Scoring::TfIdf, Scoring::Bm25, Scoring::Bm42] {
            let ranked = index.score_docs(&q(&["the", "quick", "dog"]), scoring);
            assert!(ranked.iter().all(|&(_, s)| s > 0.0));
            assert!(ranked.windows(2).all(|w| w[0].1 >= w[1].1));
        }
    }

    #[test]
    fn tf_idf_self_similarity_is_one() {
        let index = toy();
        // Query identical to chunk 0's token multiset: cosine must be 1.
        let score = chunk_score(&index, &["the", "quick", "brown", "fox"], Scoring::TfIdf, 0);
        assert!((score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn keyword_search_scores_titles() {
        let index = toy();
        let ranked = index
            .search_keywords(&q(&["fox"]), &["dataset_file_title".to_string()])
            .unwrap();
        assert_eq!(ranked.len(), 2);
        let ids: Vec<u32> = ranked.iter().map(|r| r.0).collect();
        assert!(ids.contains(&0) && ids.contains(&2));
        assert!(index
            .search_keywords(&q(&["behavior"]), &["dataset_file_title".to_string()])
            .unwrap()
            .iter()
            .any(|&(d, _)| d == 1));
    }

    #[test]
    fn keyword_search_rejects_unknown_field() {
        let index = toy();
        let err = index.search_keywords(&q(&["fox"]), &["body".to_string()]).unwrap_err();
        assert!(matches!(err, Error::UnknownField(f) if f == "body"));
    }

    #[test]
    fn round_trip_preserves_scores_exactly() {
        let index = toy();
        let mut buf = Vec::new();
        index.write_to(&mut buf).unwrap();
        let loaded = SparseIndex::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(loaded, index);
        for scoring in [Scoring::TfIdf, Scoring::Bm25, Scoring::Bm42] {
            let a = index.score_docs(&q(&["the", "quick", "dog"]), scoring);
            let b = loaded.score_docs(&q(&["the", "quick", "dog"]), scoring);
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.0, y.0);
                assert_eq!(x.1.to_bits(), y.1.to_bits());
            }
        }
    }

    #[test]
    fn read_rejects_bad_magic_and_version() {
        let index = toy();
        let mut buf = Vec::new();
        index.write_to(&mut buf).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            SparseIndex::read_from(&mut bad_magic.as_slice()),
            Err(Error::CorruptIndex { .. })
        ));

        let mut bad_version = buf.clone();
        bad_version[6..10].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(
            SparseIndex::read_from(&mut bad_version.as_slice()),
            Err(Error::VersionMismatch { expected: 1, got: 99 })
        ));
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(SparseIndex::build(&[], 1.2, 0.75), Err(Error::EmptyCorpus)));
    }
}
