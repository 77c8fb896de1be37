//! Shared text utilities: sentence splitting, whitespace normalization, and
//! citation-marker patterns.
//!
//! One splitting convention is used everywhere (annotation validation,
//! structural labeling, coverage scoring) so sentence boundaries never drift
//! between pipeline phases.

use once_cell::sync::Lazy;
use regex::Regex;

/// Words that end with a period without ending a sentence. Compared against
/// the lowercased token (letters and internal dots) preceding the period.
const ABBREVIATIONS: &[&str] = &[
    "al", "approx", "ca", "cf", "dept", "dr", "e.g", "eq", "eqs", "etc", "fig", "figs", "i.e",
    "incl", "mr", "mrs", "ms", "no", "nos", "prof", "resp", "sec", "st", "tab", "vs", "w.r.t",
];

/// Splits `text` into sentences on terminal punctuation (`.`, `!`, `?`),
/// guarding abbreviations such as "e.g." and "et al." as well as decimals.
/// Each sentence comes back whitespace-normalized.
///
/// Joining the result with single spaces reproduces the whitespace-normalized
/// input: no characters other than whitespace are ever dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let bytes = text.as_bytes();
    let mut sentences = Vec::new();
    let mut start = 0;

    let mut iter = text.char_indices().peekable();
    while let Some((idx, ch)) = iter.next() {
        if ch != '.' && ch != '!' && ch != '?' {
            continue;
        }
        // Absorb a run of terminal punctuation plus closing quotes/brackets.
        let mut end = idx + ch.len_utf8();
        while let Some(&(j, c)) = iter.peek() {
            if matches!(c, '.' | '!' | '?' | ')' | ']' | '"' | '\'' | '\u{201d}' | '\u{2019}') {
                end = j + c.len_utf8();
                iter.next();
            } else {
                break;
            }
        }
        if !is_boundary(text, bytes, idx, ch, end) {
            continue;
        }
        let sentence = normalize_whitespace(&text[start..end]);
        if !sentence.is_empty() {
            sentences.push(sentence);
        }
        start = end;
    }

    let tail = normalize_whitespace(&text[start..]);
    if !tail.is_empty() {
        sentences.push(tail);
    }
    sentences
}

fn is_boundary(text: &str, bytes: &[u8], punct_idx: usize, punct: char, end: usize) -> bool {
    // End of text always closes a sentence.
    let rest = text[end..].trim_start();
    if rest.is_empty() {
        return true;
    }
    // Require whitespace after the punctuation run ("3.5" never splits).
    if bytes.get(end).is_some_and(|b| !b.is_ascii_whitespace()) {
        return false;
    }
    if punct == '.' {
        if preceding_token_is_abbreviation(text, punct_idx) {
            return false;
        }
        // "next char lowercase" usually signals an abbreviation we don't know.
        let next = rest.chars().next().unwrap();
        if next.is_lowercase() {
            return false;
        }
        return true;
    }
    true
}

fn preceding_token_is_abbreviation(text: &str, punct_idx: usize) -> bool {
    let before = &text[..punct_idx];
    let token_start = before
        .rfind(|c: char| !(c.is_alphabetic() || c == '.'))
        .map(|i| i + 1)
        .unwrap_or(0);
    let token = before[token_start..].trim_end_matches('.').to_lowercase();
    !token.is_empty() && ABBREVIATIONS.contains(&token.as_str())
}

/// Collapses every whitespace run to a single space and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// "Smith et al., 2023" / "(Smith et al. 2023)" style markers.
pub(crate) static AUTHOR_ETAL: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"\b([A-Z][A-Za-z'\x{2019}-]+)\s+et\s+al\.?,?\s*\(?(\d{4})\)?").unwrap()
});

/// "Smith and Jones, 2024" / "Smith and Jones (2024)" style markers.
pub(crate) static AUTHOR_PAIR: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"\b([A-Z][A-Za-z'\x{2019}-]+)\s+and\s+([A-Z][A-Za-z'\x{2019}-]+),?\s*\(?(\d{4})\)?")
        .unwrap()
});

/// Bracketed numeric citations: "[12]", "[3, 7]", "[3;7]".
pub(crate) static BRACKET_CITATION: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"\[\s*\d+(?:\s*[,;]\s*\d+)*\s*\]").unwrap());
