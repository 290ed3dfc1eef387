//! Engine tokenizer and text normalization.
//!
//! One tokenizer is used everywhere (indexing, query parsing, fuzzy
//! matching, tag extraction): Unicode-aware lowercasing, split on
//! non-alphanumeric characters, empty tokens dropped. No stemming and no
//! stopword removal, so behavior is identical across languages.

/// A token together with its byte span in the original text.
///
/// `text` is the lowercased token; the span refers to the source string
/// (lowercasing may change byte length, spans never do).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Tokenize with byte spans into the source string.
pub fn tokenize_spans(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            tokens.push(Token {
                text: text[s..i].to_lowercase(),
                start: s,
                end: i,
            });
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            text: text[s..].to_lowercase(),
            start: s,
            end: text.len(),
        });
    }
    tokens
}

/// Tokenize to lowercased token strings.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_spans(text).into_iter().map(|t| t.text).collect()
}

/// Normalization used for exact-match comparisons: lowercase, trim, and
/// collapse internal whitespace runs to a single space.
pub fn normalize_exact(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.trim().chars() {
        if ch.is_whitespace() {
            pending_space = true;
        } else {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            for lc in ch.to_lowercase() {
                out.push(lc);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_non_alphanumeric_and_lowercases() {
        assert_eq!(tokenize("Hello, World!"), vec!["hello", "world"]);
        assert_eq!(tokenize("BM42-style (v2.0)"), vec!["bm42", "style", "v2", "0"]);
    }

    #[test]
    fn drops_empty_tokens() {
        assert_eq!(tokenize("  --  "), Vec::<String>::new());
        assert_eq!(tokenize(""), Vec::<String>::new());
    }

    #[test]
    fn unicode_tokens_survive() {
        assert_eq!(tokenize("Crohn\u{2019}s Österreich"), vec!["crohn", "s", "österreich"]);
    }

    #[test]
    fn spans_map_back_to_source() {
        let text = "The quick, brown FOX";
        for tok in tokenize_spans(text) {
            assert_eq!(text[tok.start..tok.end].to_lowercase(), tok.text);
        }
    }

    #[test]
    fn normalize_exact_collapses_whitespace() {
        assert_eq!(normalize_exact("  Annual  Safety REPORT "), "annual safety report");
        assert_eq!(normalize_exact("D-0417-B"), "d-0417-b");
        assert_eq!(normalize_exact(""), "");
    }
}
