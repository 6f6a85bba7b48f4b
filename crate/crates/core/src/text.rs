//! Tokenization and string normalization shared by filters, metrics and the mocks.

use serde::{Deserialize, Serialize};

/// The one tokenizer used by every corpus metric.
///
/// Text is lowercased and split into maximal runs of alphanumeric characters;
/// whitespace and punctuation are separators and never become tokens. The
/// rule tag is stamped into every metrics report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenization {
    pub rule: String,
    pub case_folding: bool,
    pub split_on: String,
    pub punctuation_tokens: String,
}

impl Default for Tokenization {
    fn default() -> Self {
        Self {
            rule: "alnum-runs-v1".to_string(),
            case_folding: true,
            split_on: "whitespace+punctuation".to_string(),
            punctuation_tokens: "dropped".to_string(),
        }
    }
}

impl Tokenization {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        tokenize(text)
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_string).collect()
}

/// Whitespace-delimited word count, as used for recommender utterance length.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Lowercased word tokens that keep intra-word apostrophes and hyphens
/// ("don't", "slow-burn"). Used by the rule-based NLI and by trigram repetition.
pub fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '-' || c == '’'))
        .map(|w| w.trim_matches(|c: char| c == '\'' || c == '-' || c == '’'))
        .filter(|w| !w.is_empty())
        .map(|w| w.replace('’', "'"))
        .collect()
}

/// Strip a trailing "(YYYY)" release-year suffix.
pub fn strip_year_suffix(title: &str) -> &str {
    let t = title.trim_end();
    if let Some(open) = t.rfind('(') {
        let inner = &t[open + 1..];
        if let Some(year) = inner.strip_suffix(')') {
            if year.len() == 4 && year.chars().all(|c| c.is_ascii_digit()) {
                return t[..open].trim_end();
            }
        }
    }
    t
}

/// Case-fold, collapse punctuation runs to single spaces, trim.
pub fn collapse_punctuation(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else {
            pending_space = true;
        }
    }
    out
}

/// Title normalization for leak detection: case-folded, year suffix
/// stripped, punctuation collapsed.
pub fn normalize_title(title: &str) -> String {
    collapse_punctuation(strip_year_suffix(title))
}

/// Word-boundary containment on normalized strings.
pub fn contains_phrase(haystack_normalized: &str, needle_normalized: &str) -> bool {
    if needle_normalized.is_empty() {
        return false;
    }
    let hay = format!(" {haystack_normalized} ");
    let needle = format!(" {needle_normalized} ");
    hay.contains(&needle)
}

/// Split free text into sentence-like statements on `.`, `!`, `?`, `;` and
/// newlines. Empty fragments are dropped.
pub fn split_statements(text: &str) -> Vec<String> {
    text.split(['.', '!', '?', ';', '\n']).map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect()
}

/// Word n-grams of a token slice.
pub fn ngrams<T: Clone>(tokens: &[T], n: usize) -> impl Iterator<Item = &[T]> {
    let count = if n == 0 || tokens.len() < n { 0 } else { tokens.len() - n + 1 };
    (0..count).map(move |i| &tokens[i..i + n])
}
