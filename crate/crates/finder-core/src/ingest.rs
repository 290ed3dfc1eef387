//! Ingestion pipeline: corpus records in, chunked and tagged `Document`s out.
//!
//! External AI tooling (translation, captioning, abstractive tagging) is
//! abstracted behind the [`Enricher`] interface; the default build ships
//! deterministic built-ins only.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_metadata, Chunk, CorpusRecord, Document, Tag, TagProvenance};
use crate::text;

/// field -> set of vocabulary phrases from the domain knowledge base.
pub type Gazetteer = BTreeMap<String, BTreeSet<String>>;

/// Parse a gazetteer file: JSON `{"field": ["phrase", ...], ...}`.
pub fn parse_gazetteer(json: &str) -> Result<Gazetteer> {
    let raw: BTreeMap<String, Vec<String>> =
        serde_json::from_str(json).map_err(|e| Error::parse(0, format!("gazetteer: {e}")))?;
    Ok(raw
        .into_iter()
        .map(|(field, phrases)| {
            (
                field,
                phrases.into_iter().filter(|p| !p.trim().is_empty()).collect(),
            )
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub max_chunk_tokens: u32,
    pub chunk_overlap_tokens: u32,
    #[serde(default)]
    pub gazetteer: Gazetteer,
    /// Enricher names applied in order after chunking and tagging.
    #[serde(default = "default_enrichers")]
    pub enrichers: Vec<String>,
}

fn default_enrichers() -> Vec<String> {
    vec!["detect-language".to_string()]
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            max_chunk_tokens: 256,
            chunk_overlap_tokens: 32,
            gazetteer: Gazetteer::new(),
            enrichers: default_enrichers(),
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_chunk_tokens == 0 {
            return Err(Error::RangeError("max_chunk_tokens must be positive".into()));
        }
        if self.chunk_overlap_tokens >= self.max_chunk_tokens {
            return Err(Error::RangeError(format!(
                "chunk_overlap_tokens ({}) must be < max_chunk_tokens ({})",
                self.chunk_overlap_tokens, self.max_chunk_tokens
            )));
        }
        Ok(())
    }
}

/// A document-to-document transformation in the ingest chain.
///
/// Implementations must not change `doc_id` or `dataset_document_number`;
/// the chain verifies this and fails the record if violated.
pub trait Enricher: Send + Sync {
    fn name(&self) -> &str;
    fn apply(&self, doc: Document) -> Document;
}

/// Fills `Metadata.language` from the body when it is absent.
pub struct LanguageDetector;

impl Enricher for LanguageDetector {
    fn name(&self) -> &str {
        "detect-language"
    }

    fn apply(&self, mut doc: Document) -> Document {
        if doc.metadata.language.is_none() {
            let detected = detect_language(&doc.body);
            if detected != "und" {
                doc.metadata.language = Some(detected);
            }
        }
        doc
    }
}

/// Stand-in for the external translation service; passes documents through.
pub struct NoopTranslator;

impl Enricher for NoopTranslator {
    fn name(&self) -> &str {
        "translate-noop"
    }

    fn apply(&self, doc: Document) -> Document {
        doc
    }
}

/// Resolve enricher names against the built-in registry.
pub fn resolve_enrichers(names: &[String]) -> Result<Vec<Box<dyn Enricher>>> {
    names
        .iter()
        .map(|name| -> Result<Box<dyn Enricher>> {
            match name.as_str() {
                "detect-language" => Ok(Box::new(LanguageDetector)),
                "translate-noop" => Ok(Box::new(NoopTranslator)),
                other => Err(Error::UnknownEnricher(other.to_string())),
            }
        })
        .collect()
}

/// Split a body into greedy fixed-size token windows with overlap.
///
/// Window stride is `max_chunk_tokens - overlap`; the final chunk may be
/// short. Char spans tile the body exactly: the first chunk starts at byte
/// 0, the last ends at `body.len()`, and each chunk begins no later than
/// the previous chunk's end, so stripping the overlapping prefix of each
/// chunk and concatenating reproduces the body byte for byte.
pub fn chunk_text(doc_id: u32, body: &str, max_chunk_tokens: u32, overlap: u32) -> Result<Vec<Chunk>> {
    if body.trim().is_empty() {
        return Err(Error::EmptyBody);
    }
    if overlap >= max_chunk_tokens {
        return Err(Error::RangeError(format!(
            "overlap ({overlap}) must be < max_chunk_tokens ({max_chunk_tokens})"
        )));
    }
    let tokens = text::tokenize_spans(body);
    let n = tokens.len();
    if n == 0 {
        // Non-empty body with no alphanumeric content: keep it as one chunk.
        return Ok(vec![Chunk {
            doc_id,
            ordinal: 0,
            text: body.to_string(),
            char_span: (0, body.len()),
            token_count: 0,
        }]);
    }

    let max = max_chunk_tokens as usize;
    let stride = max - overlap as usize;
    let mut windows = Vec::new();
    let mut s = 0usize;
    loop {
        let e = (s + max).min(n);
        windows.push((s, e));
        if e == n {
            break;
        }
        s += stride;
    }

    let mut chunks = Vec::with_capacity(windows.len());
    let mut prev_end = 0usize;
    let last = windows.len() - 1;
    for (i, &(s, e)) in windows.iter().enumerate() {
        let start = if i == 0 {
            0
        } else {
            tokens[s].start.min(prev_end)
        };
        let end = if i == last { body.len() } else { tokens[e - 1].end };
        chunks.push(Chunk {
            doc_id,
            ordinal: i as u32,
            text: body[start..end].to_string(),
            char_span: (start, end),
            token_count: (e - s) as u32,
        });
        prev_end = end;
    }
    Ok(chunks)
}

/// Extract tags by case-insensitive whole-token-sequence matching of each
/// gazetteer phrase against the body.
///
/// Confidence saturates with occurrences: `min(1, occurrences / 3)`.
/// Output is sorted by `(field, value)` and independent of gazetteer
/// iteration order.
pub fn extract_tags(body: &str, gazetteer: &Gazetteer) -> Vec<Tag> {
    let body_tokens = text::tokenize(body);
    let mut tags = Vec::new();
    for (field, phrases) in gazetteer {
        for phrase in phrases {
            let phrase_tokens = text::tokenize(phrase);
            if phrase_tokens.is_empty() {
                continue;
            }
            let count = count_subsequence(&body_tokens, &phrase_tokens);
            if count > 0 {
                tags.push(Tag {
                    field: field.clone(),
                    value: phrase.clone(),
                    provenance: TagProvenance::Extractive,
                    confidence: (count as f64 / 3.0).min(1.0),
                });
            }
        }
    }
    tags.sort_by(|a, b| (&a.field, &a.value).cmp(&(&b.field, &b.value)));
    tags
}

fn count_subsequence(haystack: &[String], needle: &[String]) -> usize {
    if needle.is_empty() || haystack.len() < needle.len() {
        return 0;
    }
    haystack
        .windows(needle.len())
        .filter(|w| w.iter().zip(needle).all(|(a, b)| a == b))
        .count()
}

const LANG_PROFILES: [(&str, &[&str]); 4] = [
    ("en", &[
        "the", "of", "and", "to", "in", "that", "it", "is", "was", "for", "on", "are", "with",
        "as", "at", "this", "have", "from", "not", "be",
    ]),
    ("fr", &[
        "le", "la", "les", "de", "des", "du", "et", "un", "une", "est", "que", "qui", "dans",
        "pour", "pas", "sur", "avec", "au", "ce", "sont",
    ]),
    ("de", &[
        "der", "die", "das", "und", "ist", "den", "von", "zu", "mit", "sich", "auf", "für",
        "nicht", "ein", "eine", "als", "auch", "werden", "wird", "bei",
    ]),
    ("es", &[
        "el", "los", "las", "y", "en", "que", "es", "un", "una", "por", "con", "no", "para",
        "se", "su", "al", "lo", "como", "más", "pero",
    ]),
];

/// Detect the body language by stopword-profile voting over a small
/// built-in profile set (en, fr, de, es). Returns `"und"` when no profile
/// reaches the vote threshold.
pub fn detect_language(body: &str) -> String {
    let tokens: Vec<String> = text::tokenize(body).into_iter().take(512).collect();
    if tokens.is_empty() {
        return "und".to_string();
    }
    let threshold = 2.max(tokens.len() / 10);
    let mut best: Option<(&str, usize)> = None;
    for (lang, profile) in LANG_PROFILES {
        let votes = tokens
            .iter()
            .filter(|t| profile.contains(&t.as_str()))
            .count();
        // Ties keep the earlier profile in the fixed order.
        if votes >= threshold && best.map_or(true, |(_, b)| votes > b) {
            best = Some((lang, votes));
        }
    }
    best.map_or_else(|| "und".to_string(), |(lang, _)| lang.to_string())
}

/// Ingest one corpus JSONL line into a fully built `Document`.
///
/// Pipeline: validate metadata, chunk the body, add extractive tags, then
/// apply each configured enricher in order. `line_no` is 1-based and is
/// only used in errors.
pub fn ingest_record(
    raw_line: &str,
    line_no: usize,
    config: &IngestConfig,
    next_id: u32,
) -> Result<Document> {
    config.validate()?;
    let enrichers = resolve_enrichers(&config.enrichers)?;
    let record = CorpusRecord::parse_line(raw_line, line_no)?
        .ok_or_else(|| Error::parse(line_no, "expected a document record"))?;
    ingest_parsed(record, config, next_id, &enrichers)
}

/// Same as [`ingest_record`] but takes an already parsed record and
/// pre-resolved enrichers (the batch path resolves them once).
pub fn ingest_parsed(
    record: CorpusRecord,
    config: &IngestConfig,
    next_id: u32,
    enrichers: &[Box<dyn Enricher>],
) -> Result<Document> {
    let metadata = validate_metadata(&record.metadata)?;
    let chunks = chunk_text(next_id, &record.body, config.max_chunk_tokens, config.chunk_overlap_tokens)?;

    let mut tags = record.tags;
    for tag in extract_tags(&record.body, &config.gazetteer) {
        if !tags.contains(&tag) {
            tags.push(tag);
        }
    }

    let mut doc = Document {
        doc_id: next_id,
        metadata,
        modality: record.modality,
        body: record.body,
        tags,
        chunks,
    };

    let body_before = doc.body.clone();
    for enricher in enrichers {
        let number_before = doc.metadata.dataset_document_number.clone();
        doc = enricher.apply(doc);
        if doc.doc_id != next_id || doc.metadata.dataset_document_number != number_before {
            return Err(Error::EnricherContract(enricher.name().to_string()));
        }
    }
    if doc.body != body_before {
        doc.chunks = chunk_text(next_id, &doc.body, config.max_chunk_tokens, config.chunk_overlap_tokens)?;
    }
    Ok(doc)
}

/// Ingest a whole JSONL corpus. Blank lines are skipped; doc ids are
/// assigned sequentially from 0 in line order. Any bad line aborts with
/// an error naming it; duplicate document numbers are rejected.
pub fn ingest_corpus(text: &str, config: &IngestConfig) -> Result<Vec<Document>> {
    config.validate()?;
    let enrichers = resolve_enrichers(&config.enrichers)?;
    let mut docs = Vec::new();
    let mut seen_numbers = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let Some(record) = CorpusRecord::parse_line(line, i + 1)? else { continue };
        let doc = ingest_parsed(record, config, docs.len() as u32, &enrichers)?;
        if !seen_numbers.insert(doc.document_number().to_string()) {
            return Err(Error::DuplicateDocumentNumber(doc.document_number().to_string()));
        }
        docs.push(doc);
    }
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gaz(field: &str, phrases: &[&str]) -> Gazetteer {
        let mut g = Gazetteer::new();
        g.insert(field.into(), phrases.iter().map(|s| s.to_string()).collect());
        g
    }

    #[test]
    fn chunk_windows_follow_stride_arithmetic() {
        let body = "t0 t1 t2 t3 t4 t5 t6 t7 t8 t9";
        let chunks = chunk_text(0, body, 4, 1).unwrap();
        assert_eq!(chunks.len(), 3);
        assert_eq!(
            chunks.iter().map(|c| c.token_count).collect::<Vec<_>>(),
            vec![4, 4, 4]
        );
        assert_eq!(
            crate::text::tokenize(&chunks[0].text),
            vec!["t0", "t1", "t2", "t3"]
        );
        assert_eq!(
            crate::text::tokenize(&chunks[1].text),
            vec!["t3", "t4", "t5", "t6"]
        );
        assert_eq!(
            crate::text::tokenize(&chunks[2].text),
            vec!["t6", "t7", "t8", "t9"]
        );
        for (i, c) in chunks.iter().enumerate() {
            assert_eq!(c.ordinal, i as u32);
            assert_eq!(&body[c.char_span.0..c.char_span.1], c.text);
        }
    }

    #[test]
    fn chunk_exact_fit_is_single() {
        let chunks = chunk_text(0, "a b c d", 4, 1).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].char_span, (0, 7));
        assert_eq!(chunks[0].token_count, 4);
    }

    #[test]
    fn chunk_empty_body_is_error() {
        assert!(matches!(chunk_text(0, "", 4, 1), Err(Error::EmptyBody)));
        assert!(matches!(chunk_text(0, "   ", 4, 1), Err(Error::EmptyBody)));
    }

    #[test]
    fn chunk_rejects_bad_overlap() {
        assert!(matches!(chunk_text(0, "a b", 4, 4), Err(Error::RangeError(_))));
    }

    fn assert_tiling(body: &str, max: u32, overlap: u32) {
        let chunks = chunk_text(0, body, max, overlap).unwrap();
        // Char-level: strip each chunk's overlapping prefix and concatenate.
        let mut rebuilt = String::new();
        let mut prev_end = 0usize;
        for c in &chunks {
            assert!(c.char_span.0 <= prev_end || rebuilt.is_empty());
            let skip = prev_end - c.char_span.0;
            rebuilt.push_str(&c.text[skip..]);
            prev_end = c.char_span.1;
        }
        assert_eq!(rebuilt, body);
        // Token-level: dropping each window's overlap reproduces the body tokens.
        let body_tokens = crate::text::tokenize(body);
        let mut rebuilt_tokens: Vec<String> = Vec::new();
        for (i, c) in chunks.iter().enumerate() {
            let toks = crate::text::tokenize(&c.text);
            let skip = if i == 0 { 0 } else { overlap as usize };
            rebuilt_tokens.extend_from_slice(&toks[skip.min(toks.len())..]);
        }
        assert_eq!(rebuilt_tokens, body_tokens);
        for c in &chunks {
            assert!(c.token_count <= max);
        }
    }

    #[test]
    fn chunk_tiling_handles_punctuation_and_whitespace() {
        assert_tiling("  a, b; c -- d e (f) g h i j!  ", 4, 1);
        assert_tiling("one two three four five", 2, 0);
        assert_tiling("single", 8, 2);
    }

    proptest! {
        #[test]
        fn chunk_tiling_holds_for_random_inputs(
            words in proptest::collection::vec("[a-zé]{1,6}", 1..60),
            max in 2u32..12,
            overlap_frac in 0u32..10,
        ) {
            let overlap = overlap_frac % max;
            let body = words.join(" ");
            assert_tiling(&body, max, overlap);
        }
    }

    #[test]
    fn extract_tags_counts_occurrences() {
        let g = gaz("indication", &["crohn disease"]);
        let tags = extract_tags(
            "Study of Crohn disease progression and Crohn disease treatment",
            &g,
        );
        assert_eq!(tags.len(), 1);
        assert_eq!(tags[0].field, "indication");
        assert_eq!(tags[0].value, "crohn disease");
        assert_eq!(tags[0].provenance, TagProvenance::Extractive);
        assert!((tags[0].confidence - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn extract_tags_saturates_at_one() {
        let g = gaz("topic", &["safety"]);
        let tags = extract_tags("safety safety safety safety", &g);
        assert_eq!(tags[0].confidence, 1.0);
    }

    #[test]
    fn extract_tags_no_match_is_empty() {
        let g = gaz("indication", &["asthma"]);
        assert!(extract_tags("unrelated body text", &g).is_empty());
        assert!(extract_tags("anything", &Gazetteer::new()).is_empty());
    }

    #[test]
    fn extract_tags_is_token_bounded() {
        let g = gaz("topic", &["bowel"]);
        assert!(extract_tags("his bowels ached", &g).is_empty());
        assert_eq!(extract_tags("the bowel study", &g).len(), 1);
    }

    #[test]
    fn extract_tags_sorted_by_field_then_value() {
        let mut g = gaz("topic", &["zeta", "alpha"]);
        g.insert("area".into(), ["med"].iter().map(|s| s.to_string()).collect());
        let tags = extract_tags("alpha zeta med", &g);
        let keys: Vec<(&str, &str)> = tags.iter().map(|t| (t.field.as_str(), t.value.as_str())).collect();
        assert_eq!(keys, vec![("area", "med"), ("topic", "alpha"), ("topic", "zeta")]);
    }

    #[test]
    fn detect_language_examples() {
        assert_eq!(detect_language("the of and to in that it is"), "en");
        assert_eq!(detect_language("zzz qqq xxx"), "und");
        assert_eq!(detect_language("le traitement est le meilleur pour les patients dans la cohorte"), "fr");
        assert_eq!(detect_language(""), "und");
    }

    fn minimal_line(body: &str) -> String {
        format!(
            r#"{{"metadata":{{"dataset_document_number":"D-1","dataset_name":"ds","dataset_file_title":"Report"}},"body":"{body}"}}"#
        )
    }

    #[test]
    fn ingest_short_body_yields_single_chunk() {
        let line = minimal_line("one two three four five six seven eight nine ten");
        let doc = ingest_record(&line, 1, &IngestConfig::default(), 7).unwrap();
        assert_eq!(doc.doc_id, 7);
        assert_eq!(doc.chunks.len(), 1);
        assert_eq!(doc.chunks[0].char_span, (0, doc.body.len()));
        assert_eq!(doc.chunks[0].doc_id, 7);
    }

    #[test]
    fn ingest_applies_gazetteer() {
        let mut config = IngestConfig::default();
        config.gazetteer = gaz("indication", &["inflammatory bowel disease"]);
        let line = minimal_line("New options for inflammatory bowel disease patients");
        let doc = ingest_record(&line, 1, &config, 0).unwrap();
        assert!(doc.tags.iter().any(|t| {
            t.field == "indication"
                && t.value == "inflammatory bowel disease"
                && t.provenance == TagProvenance::Extractive
        }));
    }

    #[test]
    fn ingest_malformed_line_is_parse_error() {
        let err = ingest_record("{oops", 12, &IngestConfig::default(), 0).unwrap_err();
        assert!(matches!(err, Error::ParseError { line: 12, .. }));
    }

    fn numbered_line(number: &str, body: &str) -> String {
        format!(
            r#"{{"metadata":{{"dataset_document_number":"{number}","dataset_name":"ds","dataset_file_title":"Report {number}"}},"body":"{body}"}}"#
        )
    }

    #[test]
    fn ingest_corpus_assigns_sequential_ids_and_skips_blanks() {
        let text = format!(
            "{}\n\n{}\n",
            numbered_line("D-1", "first body text"),
            numbered_line("D-2", "second body text")
        );
        let docs = ingest_corpus(&text, &IngestConfig::default()).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].doc_id, 0);
        assert_eq!(docs[1].doc_id, 1);
        assert_eq!(docs[1].document_number(), "D-2");
    }

    #[test]
    fn ingest_corpus_rejects_duplicates_bad_lines_and_empty_input() {
        let dup = format!("{}\n{}\n", numbered_line("D-1", "a b c"), numbered_line("D-1", "d e f"));
        assert!(matches!(
            ingest_corpus(&dup, &IngestConfig::default()),
            Err(Error::DuplicateDocumentNumber(n)) if n == "D-1"
        ));
        let bad = format!("{}\n{{oops\n", numbered_line("D-1", "a b c"));
        assert!(matches!(
            ingest_corpus(&bad, &IngestConfig::default()),
            Err(Error::ParseError { line: 2, .. })
        ));
        assert!(matches!(ingest_corpus("\n\n", &IngestConfig::default()), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn ingest_fills_language_when_absent() {
        let line = minimal_line("the study of the results that it is based on was for the most part");
        let doc = ingest_record(&line, 1, &IngestConfig::default(), 0).unwrap();
        assert_eq!(doc.metadata.language.as_deref(), Some("en"));
    }

    #[test]
    fn ingest_keeps_declared_language() {
        let line = r#"{"metadata":{"dataset_document_number":"D-1","dataset_name":"ds","dataset_file_title":"t","language":"fr"},"body":"the of and to in that it is"}"#;
        let doc = ingest_record(line, 1, &IngestConfig::default(), 0).unwrap();
        assert_eq!(doc.metadata.language.as_deref(), Some("fr"));
    }

    #[test]
    fn noop_enricher_chain_is_identity() {
        let line = minimal_line("alpha beta gamma");
        let mut with_noops = IngestConfig::default();
        with_noops.enrichers = vec!["translate-noop".into(), "translate-noop".into()];
        let mut empty = IngestConfig::default();
        empty.enrichers = vec![];
        let a = ingest_record(&line, 1, &with_noops, 0).unwrap();
        let b = ingest_record(&line, 1, &empty, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ingest_is_deterministic() {
        let mut config = IngestConfig::default();
        config.gazetteer = gaz("topic", &["alpha"]);
        let line = minimal_line("alpha beta gamma delta");
        let a = serde_json::to_string(&ingest_record(&line, 1, &config, 3).unwrap()).unwrap();
        let b = serde_json::to_string(&ingest_record(&line, 1, &config, 3).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_enricher_is_rejected() {
        let mut config = IngestConfig::default();
        config.enrichers = vec!["llm-tagger".into()];
        let err = ingest_record(&minimal_line("x"), 1, &config, 0).unwrap_err();
        assert!(matches!(err, Error::UnknownEnricher(_)));
    }
}
