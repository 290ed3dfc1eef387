//! Corpus data model: documents, chunks, tags, metadata, and corpus-level
//! statistics shared by every other module.
//!
//! All types are immutable after construction and safe to share across
//! threads without synchronization.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::text;

/// Metadata schema fields eligible for keyword search, in the fixed order
/// used when concatenating field values into a synthetic metadata document.
pub const KEYWORD_FIELDS: [&str; 7] = [
    "dataset_name",
    "dataset_file_title",
    "document_type",
    "product",
    "scientific_area",
    "content_purpose",
    "content_type",
];

/// All metadata fields usable in filters.
pub const FILTER_FIELDS: [&str; 12] = [
    "dataset_document_number",
    "dataset_name",
    "dataset_file_title",
    "document_type",
    "product",
    "scientific_area",
    "language",
    "region",
    "country",
    "content_purpose",
    "content_type",
    "created_at",
];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metadata {
    pub dataset_document_number: String,
    pub dataset_name: String,
    pub dataset_file_title: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub document_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scientific_area: Option<String>,
    /// BCP-47-style lowercase code, e.g. "en", "pt-br".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_purpose: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    /// Unknown input keys, preserved verbatim.
    #[serde(flatten)]
    pub extras: std::collections::BTreeMap<String, Value>,
}

/// True if `name` participates in metadata keyword search.
pub fn is_keyword_field(name: &str) -> bool {
    KEYWORD_FIELDS.contains(&name)
}

impl Metadata {
    /// `(field, value)` pairs for the keyword fields that are set, in
    /// `KEYWORD_FIELDS` order.
    pub fn keyword_values(&self) -> impl Iterator<Item = (&'static str, &str)> + '_ {
        KEYWORD_FIELDS
            .iter()
            .filter_map(move |f| self.field(f).map(|v| (*f, v)))
    }

    /// Value of a named schema field, if set. Extras are not reachable here;
    /// they are carried for round-tripping, not for search.
    pub fn field(&self, name: &str) -> Option<&str> {
        fn some(s: &Option<String>) -> Option<&str> {
            s.as_deref().filter(|v| !v.is_empty())
        }
        match name {
            "dataset_document_number" => Some(self.dataset_document_number.as_str()),
            "dataset_name" => Some(self.dataset_name.as_str()),
            "dataset_file_title" => Some(self.dataset_file_title.as_str()),
            "document_type" => {
                (!self.document_type.is_empty()).then_some(self.document_type.as_str())
            }
            "product" => some(&self.product),
            "scientific_area" => some(&self.scientific_area),
            "language" => some(&self.language),
            "region" => some(&self.region),
            "country" => some(&self.country),
            "content_purpose" => some(&self.content_purpose),
            "content_type" => some(&self.content_type),
            "created_at" => some(&self.created_at),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Slides,
    Image,
    Audio,
    Video,
    Email,
    Spreadsheet,
    Other,
}

impl Default for Modality {
    fn default() -> Self {
        Modality::Text
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagProvenance {
    Extractive,
    Abstractive,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tag {
    pub field: String,
    pub value: String,
    pub provenance: TagProvenance,
    /// Confidence in [0,1]. Extractive tags carry the matcher-computed value.
    pub confidence: f64,
}

/// A scoring unit: a token window of the document body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: u32,
    /// Ordinal within the parent document, consecutive from 0.
    pub ordinal: u32,
    pub text: String,
    /// Byte offsets `[start, end)` into `Document::body`.
    pub char_span: (usize, usize),
    /// Token count under the engine tokenizer.
    pub token_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: u32,
    pub metadata: Metadata,
    pub modality: Modality,
    /// Full normalized text, post-extraction and post-transcription.
    pub body: String,
    pub tags: Vec<Tag>,
    pub chunks: Vec<Chunk>,
}

impl Document {
    pub fn title(&self) -> &str {
        &self.metadata.dataset_file_title
    }

    pub fn document_number(&self) -> &str {
        &self.metadata.dataset_document_number
    }
}

/// Corpus-level statistics backing the sparse scorers.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub n_docs: u32,
    pub n_chunks: u32,
    /// term -> number of chunks containing the term (counted once per chunk).
    pub doc_freq: HashMap<String, u32>,
    /// Arithmetic mean of chunk token counts.
    pub avg_chunk_len: f64,
}

/// Validate a raw metadata map into a `Metadata`.
///
/// Required: `dataset_document_number`, `dataset_name`, `dataset_file_title`.
/// Known string fields are trimmed; `language` is lowercased and checked
/// against `[a-z]{2,3}(-[a-z0-9]{2,8})*`. Unknown keys land in `extras`.
pub fn validate_metadata(raw: &serde_json::Map<String, Value>) -> Result<Metadata> {
    fn required(raw: &serde_json::Map<String, Value>, name: &str) -> Result<String> {
        match raw.get(name).and_then(Value::as_str).map(str::trim) {
            Some(v) if !v.is_empty() => Ok(v.to_string()),
            _ => Err(Error::MissingField(name.to_string())),
        }
    }
    fn optional(raw: &serde_json::Map<String, Value>, name: &str) -> Option<String> {
        raw.get(name)
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(str::to_string)
    }

    let mut meta = Metadata {
        dataset_document_number: required(raw, "dataset_document_number")?,
        dataset_name: required(raw, "dataset_name")?,
        dataset_file_title: required(raw, "dataset_file_title")?,
        document_type: optional(raw, "document_type").unwrap_or_default(),
        product: optional(raw, "product"),
        scientific_area: optional(raw, "scientific_area"),
        language: None,
        region: optional(raw, "region"),
        country: optional(raw, "country"),
        content_purpose: optional(raw, "content_purpose"),
        content_type: optional(raw, "content_type"),
        created_at: optional(raw, "created_at"),
        extras: Default::default(),
    };

    if let Some(lang) = optional(raw, "language") {
        let lang = lang.to_lowercase();
        if !is_valid_language_tag(&lang) {
            return Err(Error::InvalidLanguage(lang));
        }
        meta.language = Some(lang);
    }

    for (key, value) in raw {
        if !FILTER_FIELDS.contains(&key.as_str()) {
            meta.extras.insert(key.clone(), value.clone());
        }
    }
    Ok(meta)
}

/// `[a-z]{2,3}(-[a-z0-9]{2,8})*`
pub fn is_valid_language_tag(tag: &str) -> bool {
    let mut parts = tag.split('-');
    let primary = match parts.next() {
        Some(p) => p,
        None => return false,
    };
    if !(2..=3).contains(&primary.len()) || !primary.bytes().all(|b| b.is_ascii_lowercase()) {
        return false;
    }
    parts.all(|sub| {
        (2..=8).contains(&sub.len())
            && sub
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit())
    })
}

/// Compute corpus statistics over chunked documents.
///
/// `doc_freq` counts chunk-level containment: a term is counted once per
/// chunk regardless of how many times it occurs there.
pub fn compute_corpus_stats(docs: &[Document]) -> Result<CorpusStats> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut doc_freq: HashMap<String, u32> = HashMap::new();
    let mut n_chunks = 0u32;
    let mut total_tokens = 0u64;
    for doc in docs {
        for chunk in &doc.chunks {
            n_chunks += 1;
            total_tokens += u64::from(chunk.token_count);
            let mut seen: Vec<String> = text::tokenize(&chunk.text);
            seen.sort_unstable();
            seen.dedup();
            for term in seen {
                *doc_freq.entry(term).or_insert(0) += 1;
            }
        }
    }
    let avg_chunk_len = if n_chunks == 0 {
        0.0
    } else {
        total_tokens as f64 / f64::from(n_chunks)
    };
    Ok(CorpusStats {
        n_docs: docs.len() as u32,
        n_chunks,
        doc_freq,
        avg_chunk_len,
    })
}

/// One line of the corpus input format: a document record before ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub metadata: serde_json::Map<String, Value>,
    #[serde(default)]
    pub modality: Modality,
    pub body: String,
    #[serde(default)]
    pub tags: Vec<Tag>,
}

impl CorpusRecord {
    /// Parse one corpus JSONL line. `line_no` is 1-based and only used for
    /// error reporting. Returns `None` for comment (`#`) and blank lines.
    pub fn parse_line(line: &str, line_no: usize) -> Result<Option<CorpusRecord>> {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            return Ok(None);
        }
        let record: CorpusRecord = serde_json::from_str(trimmed)
            .map_err(|e| Error::parse(line_no, e.to_string()))?;
        for tag in &record.tags {
            if !(0.0..=1.0).contains(&tag.confidence) {
                return Err(Error::parse(
                    line_no,
                    format!("tag confidence {} outside [0,1]", tag.confidence),
                ));
            }
        }
        Ok(Some(record))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(pairs: &[(&str, &str)]) -> serde_json::Map<String, Value> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), Value::String(v.to_string())))
            .collect()
    }

    fn minimal() -> serde_json::Map<String, Value> {
        raw(&[
            ("dataset_document_number", "D-001"),
            ("dataset_name", "ds"),
            ("dataset_file_title", "t"),
        ])
    }

    #[test]
    fn validate_normalizes_language() {
        let mut m = minimal();
        m.insert("language".into(), Value::String("EN".into()));
        let meta = validate_metadata(&m).unwrap();
        assert_eq!(meta.language.as_deref(), Some("en"));
        assert_eq!(meta.dataset_document_number, "D-001");
    }

    #[test]
    fn validate_rejects_missing_required_field() {
        let m = raw(&[("dataset_name", "ds")]);
        match validate_metadata(&m) {
            Err(Error::MissingField(f)) => assert_eq!(f, "dataset_document_number"),
            other => panic!("expected MissingField, got {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_bad_language() {
        let mut m = minimal();
        m.insert("language".into(), Value::String("english words".into()));
        assert!(matches!(
            validate_metadata(&m),
            Err(Error::InvalidLanguage(_))
        ));
    }

    #[test]
    fn validate_preserves_unknown_keys() {
        let mut m = minimal();
        m.insert("custom_key".into(), Value::String("v".into()));
        let meta = validate_metadata(&m).unwrap();
        assert_eq!(
            meta.extras.get("custom_key"),
            Some(&Value::String("v".into()))
        );
    }

    #[test]
    fn language_tag_pattern() {
        for ok in ["en", "fra", "pt-br", "zh-hans", "en-us-x1"] {
            assert!(is_valid_language_tag(ok), "{ok}");
        }
        for bad in ["e", "EN", "en_US", "english words", "en-", "en-a", "toolong1x"] {
            assert!(!is_valid_language_tag(bad), "{bad}");
        }
    }

    fn doc_with_chunks(doc_id: u32, chunk_texts: &[&str]) -> Document {
        let chunks = chunk_texts
            .iter()
            .enumerate()
            .map(|(i, t)| Chunk {
                doc_id,
                ordinal: i as u32,
                text: t.to_string(),
                char_span: (0, t.len()),
                token_count: text::tokenize(t).len() as u32,
            })
            .collect();
        Document {
            doc_id,
            metadata: Metadata {
                dataset_document_number: format!("D-{doc_id}"),
                dataset_name: "ds".into(),
                dataset_file_title: format!("title {doc_id}"),
                ..Default::default()
            },
            modality: Modality::Text,
            body: chunk_texts.join(" "),
            tags: vec![],
            chunks,
        }
    }

    #[test]
    fn corpus_stats_counts_containment() {
        let docs = vec![doc_with_chunks(0, &["a b"]), doc_with_chunks(1, &["b c"])];
        let stats = compute_corpus_stats(&docs).unwrap();
        assert_eq!(stats.n_docs, 2);
        assert_eq!(stats.n_chunks, 2);
        assert_eq!(stats.doc_freq["a"], 1);
        assert_eq!(stats.doc_freq["b"], 2);
        assert_eq!(stats.doc_freq["c"], 1);
        assert_eq!(stats.avg_chunk_len, 2.0);
    }

    #[test]
    fn corpus_stats_once_per_chunk() {
        let docs = vec![doc_with_chunks(0, &["x x x"])];
        let stats = compute_corpus_stats(&docs).unwrap();
        assert_eq!(stats.doc_freq["x"], 1);
    }

    #[test]
    fn corpus_stats_empty_is_error() {
        assert!(matches!(compute_corpus_stats(&[]), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn corpus_stats_permutation_invariant() {
        let a = vec![
            doc_with_chunks(0, &["a b", "c"]),
            doc_with_chunks(1, &["b c d"]),
        ];
        let b = vec![a[1].clone(), a[0].clone()];
        let sa = compute_corpus_stats(&a).unwrap();
        let sb = compute_corpus_stats(&b).unwrap();
        assert_eq!(sa.doc_freq, sb.doc_freq);
        assert_eq!(sa.avg_chunk_len, sb.avg_chunk_len);
        assert_eq!(sa.n_chunks, sb.n_chunks);
    }

    #[test]
    fn corpus_stats_doc_freq_sums_to_distinct_pairs() {
        let docs = vec![
            doc_with_chunks(0, &["a b a", "b"]),
            doc_with_chunks(1, &["c a"]),
        ];
        let stats = compute_corpus_stats(&docs).unwrap();
        let total: u32 = stats.doc_freq.values().sum();
        // distinct (term, chunk) pairs: {a,b}, {b}, {c,a} -> 5
        assert_eq!(total, 5);
    }

    #[test]
    fn document_round_trips_through_json() {
        let mut doc = doc_with_chunks(3, &["alpha beta", "gamma"]);
        doc.metadata.language = Some("en".into());
        doc.metadata
            .extras
            .insert("custom".into(), serde_json::json!({"a": [1, 2]}));
        doc.tags.push(Tag {
            field: "topic".into(),
            value: "safety".into(),
            provenance: TagProvenance::Manual,
            confidence: 1.0,
        });
        let json = serde_json::to_string(&doc).unwrap();
        let back: Document = serde_json::from_str(&json).unwrap();
        assert_eq!(doc, back);
    }

    #[test]
    fn corpus_record_parses_and_skips_comments() {
        let line = r#"{"metadata":{"dataset_document_number":"D-1","dataset_name":"ds","dataset_file_title":"t"},"modality":"text","body":"hello","tags":[{"field":"f","value":"v","provenance":"extractive","confidence":0.9}]}"#;
        let rec = CorpusRecord::parse_line(line, 1).unwrap().unwrap();
        assert_eq!(rec.body, "hello");
        assert_eq!(rec.tags.len(), 1);
        assert!(CorpusRecord::parse_line("# comment", 2).unwrap().is_none());
        assert!(CorpusRecord::parse_line("   ", 3).unwrap().is_none());
        assert!(matches!(
            CorpusRecord::parse_line("{not json", 4),
            Err(Error::ParseError { line: 4, .. })
        ));
    }
}
