//! Fuzzy string similarity on the 0..=100 scale used by the ranker.
//!
//! The core distance is indel (insertions and deletions only, no
//! substitutions), computed from the longest common subsequence. The
//! public entry point is [`token_set_ratio`], which is order- and
//! duplicate-insensitive at the token level.

use std::collections::BTreeSet;

use crate::text;

/// Length of the longest common subsequence of two char sequences,
/// using a two-row DP table.
fn lcs_len(a: &[char], b: &[char]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; short.len() + 1];
    let mut curr = vec![0usize; short.len() + 1];
    for &lc in long {
        for (j, &sc) in short.iter().enumerate() {
            curr[j + 1] = if lc == sc {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[short.len()]
}

/// Minimum number of insertions plus deletions turning `a` into `b`.
pub fn indel_distance(a: &str, b: &str) -> usize {
    let ac: Vec<char> = a.chars().collect();
    let bc: Vec<char> = b.chars().collect();
    ac.len() + bc.len() - 2 * lcs_len(&ac, &bc)
}

/// Normalized indel similarity: `100 * (|a| + |b| - dist) / (|a| + |b|)`.
/// Two empty strings are identical, so the ratio is 100.
pub fn ratio(a: &str, b: &str) -> f64 {
    let total = a.chars().count() + b.chars().count();
    if total == 0 {
        return 100.0;
    }
    100.0 * (total - indel_distance(a, b)) as f64 / total as f64
}

fn join(set: &BTreeSet<String>) -> String {
    set.iter().cloned().collect::<Vec<_>>().join(" ")
}

/// Token-set similarity in 0..=100.
///
/// Both strings are tokenized into sorted unique token sets. With
/// `I = a ∩ b`, the compared strings are `I`, `I + (a - b)` and
/// `I + (b - a)` (space-joined, sorted); the result is the maximum
/// [`ratio`] over the three pairings. Duplicate tokens and token order
/// never affect the score, and a token-subset relation scores exactly 100.
pub fn token_set_ratio(a: &str, b: &str) -> f64 {
    let set_a: BTreeSet<String> = text::tokenize(a).into_iter().collect();
    let set_b: BTreeSet<String> = text::tokenize(b).into_iter().collect();
    if set_a.is_empty() && set_b.is_empty() {
        return 100.0;
    }

    let inter: BTreeSet<String> = set_a.intersection(&set_b).cloned().collect();
    let sect = join(&inter);
    let combined = |diff: BTreeSet<String>| -> String {
        if sect.is_empty() {
            join(&diff)
        } else if diff.is_empty() {
            sect.clone()
        } else {
            format!("{sect} {}", join(&diff))
        }
    };
    let c1 = combined(set_a.difference(&set_b).cloned().collect());
    let c2 = combined(set_b.difference(&set_a).cloned().collect());

    ratio(&sect, &c1).max(ratio(&sect, &c2)).max(ratio(&c1, &c2))
}
