//! The one tokenizer every count in the crate goes through.
//!
//! A token is a whitespace-delimited chunk, lowercased, with leading and
//! trailing non-alphanumeric characters stripped. Chunks that strip down to
//! nothing are dropped. Internal punctuation survives (`"u.s."` becomes
//! `"u.s"`, `"what's"` stays `"what's"`). No stemming.
//!
//! Lengths, novel-token percentages, composition overlap and budgets, and
//! ROUGE all use this rule.

use std::collections::HashSet;

/// Normalizes one whitespace chunk into a token, or `None` if nothing is left.
pub fn normalize_word(word: &str) -> Option<String> {
    let trimmed = word.trim_matches(|c: char| !c.is_alphanumeric());
    if trimmed.is_empty() {
        None
    } else {
        Some(trimmed.to_lowercase())
    }
}

/// Tokenizes `text` into an ordered token sequence.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().filter_map(normalize_word).collect()
}

/// Number of tokens in `text`.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace()
        .filter(|w| w.chars().any(char::is_alphanumeric))
        .count()
}

/// The set of token types in `text`.
pub fn token_types(text: &str) -> HashSet<String> {
    text.split_whitespace().filter_map(normalize_word).collect()
}

/// Keeps the longest whitespace-word prefix of `text` whose token count does
/// not exceed `max_tokens`. Returns the kept text (words re-joined by single
/// spaces only when a cut happened) and whether anything was cut.
pub fn truncate_to_tokens(text: &str, max_tokens: usize) -> (String, bool) {
    if token_count(text) <= max_tokens {
        return (text.to_string(), false);
    }
    let mut kept = Vec::new();
    let mut used = 0;
    for word in text.split_whitespace() {
        let cost = usize::from(word.chars().any(char::is_alphanumeric));
        if used + cost > max_tokens {
            break;
        }
        used += cost;
        kept.push(word);
    }
    // trailing punctuation-only words carry no tokens; drop them too
    while kept
        .last()
        .is_some_and(|w| !w.chars().any(char::is_alphanumeric))
    {
        kept.pop();
    }
    (kept.join(" "), true)
}

/// Pairwise (cascade) summation. Result does not depend on how the input was
/// produced, only on its order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Arithmetic mean via [`pairwise_sum`]; `None` for an empty slice.
pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(pairwise_sum(values) / values.len() as f64)
    }
}
