//! Rule-based citation-key extraction from experiment sections.

use crate::text::{AUTHOR_ETAL, AUTHOR_PAIR, BRACKET_CITATION};

/// Extracts citation keys from free text, in first-occurrence order and
/// deduplicated. Author-year mentions are canonicalized ("Smith et al., 2023";
/// "Smith and Jones, 2024"); bracketed numerics are expanded per number
/// ("[3, 7]" yields "[3]" and "[7]").
pub fn extract_citation_keys(experiment_text: &str) -> Vec<String> {
    let mut found: Vec<(usize, String)> = Vec::new();

    for caps in AUTHOR_ETAL.captures_iter(experiment_text) {
        let m = caps.get(0).unwrap();
        let key = format!("{} et al., {}", &caps[1], &caps[2]);
        found.push((m.start(), key));
    }
    for caps in AUTHOR_PAIR.captures_iter(experiment_text) {
        let m = caps.get(0).unwrap();
        // "X and Y" where X already matched "et al." belongs to the other
        // pattern ("al" is not an author surname).
        if &caps[1] == "al" {
            continue;
        }
        let key = format!("{} and {}, {}", &caps[1], &caps[2], &caps[3]);
        found.push((m.start(), key));
    }
    for m in BRACKET_CITATION.find_iter(experiment_text) {
        let numbers = m
            .as_str()
            .trim_matches(['[', ']'])
            .split([',', ';'])
            .map(str::trim)
            .filter(|s| !s.is_empty());
        for (i, n) in numbers.enumerate() {
            // Components keep their textual position, ordered within the match.
            found.push((m.start() + i, format!("[{n}]")));
        }
    }

    found.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let mut keys = Vec::new();
    let mut seen = Vec::new();
    for (_, key) in found {
        let norm = normalize_key(&key);
        if !seen.contains(&norm) {
            seen.push(norm);
            keys.push(key);
        }
    }
    keys
}

/// Lowercased alphanumeric form used for dedup and for matching keys against
/// a paper's reference-list entries.
pub(crate) fn normalize_key(key: &str) -> String {
    key.chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}
