//! Rule-based query understanding: inline filter extraction, vocabulary
//! filter inference, glossary expansion, and user-filter precedence.
//!
//! This replaces an LLM intent-parsing stage with deterministic rules that
//! produce the same structured shape, so the downstream contract stays
//! testable. Precedence, strongest first: filters passed with the request,
//! then inline `key:value` expressions, then values inferred from the
//! query text.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dense::Embedder;
use crate::error::{Error, Result};
use crate::text;

/// Fields whose values may be inferred from free text, in tie-break order.
pub const INFERABLE_FIELDS: [&str; 5] =
    ["country", "language", "product", "scientific_area", "content_type"];

/// field -> set of known values (casefolded, token-normalized).
pub type Vocabularies = BTreeMap<String, BTreeSet<String>>;

pub type FilterMap = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredQuery {
    /// Residual free text after all filter extraction.
    pub main_query: String,
    /// Effective filters: user filters overriding inferred ones key-wise.
    pub filters: FilterMap,
    /// Glossary-expanded variants; `[0]` is always `main_query` itself.
    pub reformulations: Vec<String>,
    /// Request filters merged over inline `key:value` expressions.
    pub user_filters: FilterMap,
    pub inferred_filters: FilterMap,
}

/// abbreviation (casefolded) -> candidate expansions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Glossary {
    entries: BTreeMap<String, Vec<String>>,
}

impl Glossary {
    /// Expansions are embedded on demand during expansion; entries only
    /// hold the strings.
    pub fn new(entries: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut casefolded = BTreeMap::new();
        for (abbr, expansions) in entries {
            if expansions.is_empty() || expansions.iter().any(|e| e.trim().is_empty()) {
                return Err(Error::parse(0, format!("glossary entry {abbr:?} has an empty expansion")));
            }
            casefolded.insert(abbr.to_lowercase(), expansions);
        }
        Ok(Glossary { entries: casefolded })
    }

    pub fn empty() -> Self {
        Glossary::default()
    }

    /// Parse `{"IBD": ["Inflammatory Bowel Disease"], ...}`.
    pub fn parse(json: &str) -> Result<Self> {
        let raw: BTreeMap<String, Vec<String>> =
            serde_json::from_str(json).map_err(|e| Error::parse(0, format!("glossary: {e}")))?;
        Glossary::new(raw)
    }

    pub fn get(&self, abbreviation_casefolded: &str) -> Option<&[String]> {
        self.entries.get(abbreviation_casefolded).map(Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parse a vocabularies file: JSON `{"field": ["value", ...], ...}`.
/// Values are stored casefolded and token-normalized for matching.
pub fn parse_vocabularies(json: &str) -> Result<Vocabularies> {
    let raw: BTreeMap<String, Vec<String>> =
        serde_json::from_str(json).map_err(|e| Error::parse(0, format!("vocabularies: {e}")))?;
    Ok(raw
        .into_iter()
        .map(|(field, values)| {
            (
                field,
                values
                    .iter()
                    .map(|v| normalize_value(v))
                    .filter(|v| !v.is_empty())
                    .collect(),
            )
        })
        .collect())
}

/// Canonical matching form of a metadata value: engine tokens joined by
/// single spaces (lowercased, punctuation-insensitive).
pub fn normalize_value(value: &str) -> String {
    text::tokenize(value).join(" ")
}

/// Pull inline `key:value` and `key:"quoted value"` expressions out of the
/// raw query. Returns the residual text and the extracted filters (keys
/// lowercased, later occurrences of a key winning).
pub fn extract_inline_filters(raw: &str) -> (String, FilterMap) {
    let chars: Vec<char> = raw.chars().collect();
    let n = chars.len();
    let mut filters = FilterMap::new();
    let mut words: Vec<String> = Vec::new();
    let mut i = 0;
    while i < n {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        // Candidate key: identifier directly followed by ':'.
        let mut j = i;
        while j < n && (chars[j].is_alphanumeric() || chars[j] == '_') {
            j += 1;
        }
        let is_key = j > i
            && j < n
            && chars[j] == ':'
            && (chars[i].is_alphabetic() || chars[i] == '_');
        if is_key {
            let key: String = chars[i..j].iter().collect::<String>().to_lowercase();
            let k = j + 1;
            if k < n && chars[k] == '"' {
                if let Some(close) = (k + 1..n).find(|&p| chars[p] == '"') {
                    filters.insert(key, chars[k + 1..close].iter().collect());
                    i = close + 1;
                    continue;
                }
            } else {
                let mut end = k;
                while end < n && !chars[end].is_whitespace() {
                    end += 1;
                }
                if end > k {
                    filters.insert(key, chars[k..end].iter().collect());
                    i = end;
                    continue;
                }
            }
        }
        // Plain word.
        let mut end = start;
        while end < n && !chars[end].is_whitespace() {
            end += 1;
        }
        words.push(chars[start..end].iter().collect());
        i = end;
    }
    (words.join(" "), filters)
}

/// Longest-match scan of query n-grams (n ≤ 4) against field vocabularies.
/// A match sets the field (first longest match wins; same-length ties go to
/// the field order of [`INFERABLE_FIELDS`], then remaining fields
/// alphabetically) and removes the matched words from the query. Returns
/// the residual query and the inferred filters.
pub fn infer_filters(main_query: &str, vocabularies: &Vocabularies) -> (String, FilterMap) {
    let words: Vec<&str> = main_query.split_whitespace().collect();
    let mut used = vec![false; words.len()];
    let mut inferred = FilterMap::new();

    let mut field_order: Vec<&str> = INFERABLE_FIELDS
        .iter()
        .copied()
        .filter(|f| vocabularies.contains_key(*f))
        .collect();
    for field in vocabularies.keys() {
        if !INFERABLE_FIELDS.contains(&field.as_str()) {
            field_order.push(field);
        }
    }

    for n in (1..=4usize.min(words.len().max(1))).rev() {
        let mut start = 0;
        while start + n <= words.len() {
            if (start..start + n).any(|p| used[p]) {
                start += 1;
                continue;
            }
            let key = normalize_value(&words[start..start + n].join(" "));
            let found = if key.is_empty() {
                None
            } else {
                field_order.iter().copied().find(|field| {
                    !inferred.contains_key(*field) && vocabularies[*field].contains(&key)
                })
            };
            if let Some(field) = found {
                inferred.insert(field.to_string(), key);
                for p in start..start + n {
                    used[p] = true;
                }
                start += n;
            } else {
                start += 1;
            }
        }
    }

    let residual: Vec<&str> = words
        .iter()
        .enumerate()
        .filter(|&(p, _)| !used[p])
        .map(|(_, w)| *w)
        .collect();
    (residual.join(" "), inferred)
}

/// Key-wise union where `user` wins on collision.
pub fn merge_filters(user: &FilterMap, inferred: &FilterMap) -> FilterMap {
    let mut merged = inferred.clone();
    for (k, v) in user {
        merged.insert(k.clone(), v.clone());
    }
    merged
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

/// Glossary-expanded variants of `main_query`.
///
/// For each word whose single token matches a glossary abbreviation: a sole
/// expansion substitutes unconditionally; with several, the expansion whose
/// embedding is closest (cosine) to the rest of the query is substituted,
/// provided the cosine reaches `threshold`, otherwise the abbreviation is
/// kept. Each substitution yields one reformulation; `[0]` is always the
/// unmodified query.
pub fn expand_glossary(
    main_query: &str,
    glossary: &Glossary,
    embedder: &dyn Embedder,
    threshold: f64,
) -> Vec<String> {
    let mut reformulations = vec![main_query.to_string()];
    if glossary.is_empty() {
        return reformulations;
    }
    let words: Vec<&str> = main_query.split_whitespace().collect();
    for (idx, word) in words.iter().enumerate() {
        let tokens = text::tokenize(word);
        let [token] = tokens.as_slice() else { continue };
        let Some(expansions) = glossary.get(token) else { continue };

        let chosen = if expansions.len() == 1 {
            Some(expansions[0].as_str())
        } else {
            let context: Vec<&str> = words
                .iter()
                .enumerate()
                .filter(|&(p, _)| p != idx)
                .map(|(_, w)| *w)
                .collect();
            let context_vec = embedder.embed(&context.join(" "));
            let mut best: Option<(f64, &str)> = None;
            for expansion in expansions {
                let cos = cosine(&embedder.embed(expansion), &context_vec);
                if best.map_or(true, |(b, _)| cos > b) {
                    best = Some((cos, expansion));
                }
            }
            best.filter(|&(cos, _)| cos >= threshold).map(|(_, e)| e)
        };

        if let Some(expansion) = chosen {
            let variant: Vec<&str> = words
                .iter()
                .enumerate()
                .map(|(p, w)| if p == idx { expansion } else { *w })
                .collect();
            let variant = variant.join(" ");
            if !reformulations.contains(&variant) {
                reformulations.push(variant);
            }
        }
    }
    reformulations
}

/// Everything [`parse`](QueryParser::parse) needs, borrowed from the engine.
pub struct QueryParser<'a> {
    pub glossary: &'a Glossary,
    pub vocabularies: &'a Vocabularies,
    pub embedder: &'a dyn Embedder,
    /// Minimum cosine for an ambiguous glossary expansion to be applied.
    pub threshold: f64,
}

impl QueryParser<'_> {
    /// Full parse pipeline: inline extraction, filter inference on the
    /// residual, glossary expansion on the final main query, then filter
    /// merging with user precedence.
    pub fn parse(&self, raw: &str, user_filters: &FilterMap) -> Result<StructuredQuery> {
        if raw.trim().is_empty() {
            return Err(Error::EmptyQuery);
        }
        let (residual, inline) = extract_inline_filters(raw);
        let user = merge_filters(user_filters, &inline);
        let (main_query, inferred) = infer_filters(&residual, self.vocabularies);
        let reformulations =
            expand_glossary(&main_query, self.glossary, self.embedder, self.threshold);
        let filters = merge_filters(&user, &inferred);
        Ok(StructuredQuery { main_query, filters, reformulations, user_filters: user, inferred_filters: inferred })
    }
}
