//! Small text utilities shared by label matching, metrics and correctors.

use std::collections::BTreeSet;

/// Trims and collapses every run of whitespace into a single space.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Label form used for matching: lowercase with collapsed whitespace.
pub fn normalize_label(text: &str) -> String {
    collapse_whitespace(&text.to_lowercase())
}

/// Lowercased word tokens. Apostrophes inside a word are kept ("don't").
pub fn word_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .replace(['\u{2018}', '\u{2019}'], "'")
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|t| t.trim_matches('\''))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    word_tokens(text).into_iter().collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let shared = a.intersection(b).count();
    let union = a.len() + b.len() - shared;
    shared as f64 / union as f64
}

/// Jaccard similarity over raw lowercase word tokens.
pub fn token_jaccard(a: &str, b: &str) -> f64 {
    jaccard(&token_set(a), &token_set(b))
}

const STOP_WORDS: &[&str] = &[
    "a", "an", "the", "to", "of", "in", "on", "at", "for", "into", "onto", "with", "and", "or",
    "from", "your", "their", "his", "her", "its", "it", "is", "are", "be", "some", "my", "our",
];

/// Crude suffix stripping, enough to conflate "driving"/"drive" and "makes"/"make".
pub fn stem(word: &str) -> String {
    let mut w = word.to_owned();
    if w.len() > 5 && w.ends_with("ing") {
        w.truncate(w.len() - 3);
    } else if w.len() > 4 && w.ends_with("ed") {
        w.truncate(w.len() - 2);
    } else if w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") {
        w.truncate(w.len() - 1);
    }
    if w.len() > 3 && w.ends_with('e') {
        w.truncate(w.len() - 1);
    }
    w
}

/// Stemmed tokens with stop words removed.
pub fn content_tokens(text: &str) -> BTreeSet<String> {
    word_tokens(text)
        .into_iter()
        .filter(|t| !STOP_WORDS.contains(&t.as_str()))
        .map(|t| stem(&t))
        .collect()
}

/// Jaccard similarity over stemmed content words.
pub fn content_jaccard(a: &str, b: &str) -> f64 {
    jaccard(&content_tokens(a), &content_tokens(b))
}
