//! Baseline-reference resolution through a metadata lookup client.

use std::collections::HashMap;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use super::citations::normalize_key;
use super::{BaselineReference, ReferenceEntry, ResolutionStatus};

/// Title-based metadata lookup. Implementations must be safe for concurrent
/// calls or serialize internally.
pub trait MetadataLookupClient: Send + Sync {
    /// Returns the metadata for the best match of `title`, or `None` when the
    /// service knows no such paper.
    fn lookup(&self, title: &str) -> Result<Option<PaperMetadata>, LookupError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaperMetadata {
    pub title: String,
    pub abstract_text: String,
}

#[derive(Debug, Clone, Error)]
pub enum LookupError {
    /// Worth retrying: timeouts, rate limits, 5xx responses.
    #[error("transient lookup failure: {0}")]
    Transient(String),
    /// Not worth retrying for this request.
    #[error("lookup failed: {0}")]
    Permanent(String),
}

#[derive(Debug, Clone)]
pub struct ResolveConfig {
    /// Additional attempts after the first on transient failures.
    pub max_retries: u32,
    /// Base delay between attempts; grows linearly with the attempt number.
    pub backoff: Duration,
}

impl Default for ResolveConfig {
    fn default() -> Self {
        ResolveConfig {
            max_retries: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

impl ResolveConfig {
    /// No waiting between attempts; for tests and recorded clients.
    pub fn immediate() -> Self {
        ResolveConfig {
            max_retries: 3,
            backoff: Duration::ZERO,
        }
    }
}

/// The lookup client stayed unreachable after retries. Carries whatever was
/// resolved before the batch stopped.
#[derive(Debug, Error)]
#[error("metadata lookup unreachable after retries: {message} ({} of {total} keys processed)", .partial.len())]
pub struct ResolveError {
    pub partial: Vec<BaselineReference>,
    pub total: usize,
    pub message: String,
}

/// Resolves each citation key against the paper's own reference list, then
/// fetches the abstract for unambiguous matches. A key with no matching entry
/// is `NotFound`; a key matching several entries is `Ambiguous` and the
/// client is not called. Transient client failures are retried with backoff;
/// a single key's permanent failure never aborts the batch.
pub fn resolve_reference_abstracts(
    keys: &[String],
    entries: &[ReferenceEntry],
    client: &dyn MetadataLookupClient,
    config: &ResolveConfig,
) -> Result<Vec<BaselineReference>, ResolveError> {
    let mut refs = Vec::with_capacity(keys.len());
    for key in keys {
        let matches: Vec<&ReferenceEntry> = entries
            .iter()
            .filter(|entry| entry_matches_key(entry, key))
            .collect();
        let reference = match matches.as_slice() {
            [] => BaselineReference {
                citation_key: key.clone(),
                title: String::new(),
                abstract_text: String::new(),
                resolution_status: ResolutionStatus::NotFound,
            },
            [entry] => match lookup_with_retry(client, &entry.title, config) {
                Ok(Some(meta)) if !meta.abstract_text.trim().is_empty() => BaselineReference {
                    citation_key: key.clone(),
                    title: entry.title.clone(),
                    abstract_text: meta.abstract_text,
                    resolution_status: ResolutionStatus::Resolved,
                },
                Ok(_) => BaselineReference {
                    citation_key: key.clone(),
                    title: entry.title.clone(),
                    abstract_text: String::new(),
                    resolution_status: ResolutionStatus::NotFound,
                },
                Err(LookupError::Permanent(_)) => BaselineReference {
                    citation_key: key.clone(),
                    title: entry.title.clone(),
                    abstract_text: String::new(),
                    resolution_status: ResolutionStatus::NotFound,
                },
                Err(LookupError::Transient(message)) => {
                    return Err(ResolveError {
                        partial: refs,
                        total: keys.len(),
                        message,
                    });
                }
            },
            _ => BaselineReference {
                citation_key: key.clone(),
                title: String::new(),
                abstract_text: String::new(),
                resolution_status: ResolutionStatus::Ambiguous,
            },
        };
        refs.push(reference);
    }
    Ok(refs)
}

fn lookup_with_retry(
    client: &dyn MetadataLookupClient,
    title: &str,
    config: &ResolveConfig,
) -> Result<Option<PaperMetadata>, LookupError> {
    let mut last = None;
    for attempt in 0..=config.max_retries {
        match client.lookup(title) {
            Err(LookupError::Transient(message)) => {
                last = Some(LookupError::Transient(message));
                if attempt < config.max_retries && !config.backoff.is_zero() {
                    std::thread::sleep(config.backoff * (attempt + 1));
                }
            }
            other => return other,
        }
    }
    Err(last.expect("at least one attempt was made"))
}

/// Normalized author-year comparison between a citation key and a
/// reference-list entry key. Handles concatenated entry keys ("smith2023"),
/// spelled-out keys ("Smith et al., 2023"), and numeric keys for bracketed
/// citations.
fn entry_matches_key(entry: &ReferenceEntry, key: &str) -> bool {
    let entry_norm = normalize_key(&entry.key).replace(' ', "");
    let key_norm = normalize_key(key);
    if key_norm.is_empty() || entry_norm.is_empty() {
        return false;
    }
    let tokens: Vec<&str> = key_norm
        .split_whitespace()
        .filter(|t| !matches!(*t, "et" | "al" | "and"))
        .collect();
    if tokens.len() == 1 && tokens[0].chars().all(|c| c.is_ascii_digit()) {
        return entry_norm == tokens[0];
    }
    tokens.iter().all(|t| entry_norm.contains(t))
}

/// Deterministic stand-in lookup: every title resolves, with a synthesized
/// abstract derived from the title.
#[derive(Debug, Default)]
pub struct MockMetadataClient;

impl MetadataLookupClient for MockMetadataClient {
    fn lookup(&self, title: &str) -> Result<Option<PaperMetadata>, LookupError> {
        Ok(Some(PaperMetadata {
            title: title.to_string(),
            abstract_text: format!(
                "This paper, {title}, studies its problem setting in detail and reports \
                 competitive results on standard benchmarks."
            ),
        }))
    }
}

/// Replays recorded lookups from a JSON map of title -> abstract. Unknown
/// titles are not-found; `null` entries simulate a not-found recording.
#[derive(Debug)]
pub struct RecordedMetadataClient {
    records: HashMap<String, Option<String>>,
}

impl RecordedMetadataClient {
    pub fn new(records: HashMap<String, Option<String>>) -> Self {
        RecordedMetadataClient { records }
    }

    pub fn from_json_file(path: &std::path::Path) -> std::io::Result<Self> {
        let data = std::fs::read_to_string(path)?;
        let records: HashMap<String, Option<String>> = serde_json::from_str(&data)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(RecordedMetadataClient { records })
    }
}

impl MetadataLookupClient for RecordedMetadataClient {
    fn lookup(&self, title: &str) -> Result<Option<PaperMetadata>, LookupError> {
        Ok(self.records.get(title).and_then(|entry| {
            entry.as_ref().map(|abstract_text| PaperMetadata {
                title: title.to_string(),
                abstract_text: abstract_text.clone(),
            })
        }))
    }
}

/// Live title-search client against a scholarly metadata API exposing a
/// `paper/search?query=` endpoint that returns `{"data": [{title, abstract}]}`.
pub struct HttpMetadataClient {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct SearchResponse {
    #[serde(default)]
    data: Vec<SearchHit>,
}

#[derive(Deserialize)]
struct SearchHit {
    #[serde(default)]
    title: Option<String>,
    #[serde(default, rename = "abstract")]
    abstract_text: Option<String>,
}

impl HttpMetadataClient {
    pub const DEFAULT_ENDPOINT: &'static str =
        "https://api.semanticscholar.org/graph/v1/paper/search";

    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        HttpMetadataClient {
            endpoint: endpoint.into(),
            api_key,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(30))
                .build()
                .expect("default TLS backend available"),
        }
    }
}

impl MetadataLookupClient for HttpMetadataClient {
    fn lookup(&self, title: &str) -> Result<Option<PaperMetadata>, LookupError> {
        let mut request = self
            .client
            .get(&self.endpoint)
            .query(&[("query", title), ("fields", "title,abstract"), ("limit", "1")]);
        if let Some(key) = &self.api_key {
            request = request.header("x-api-key", key);
        }
        let response = request
            .send()
            .map_err(|e| LookupError::Transient(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(LookupError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(LookupError::Permanent(format!("HTTP {status}")));
        }
        let body: SearchResponse = response
            .json()
            .map_err(|e| LookupError::Permanent(format!("bad response body: {e}")))?;
        Ok(body.data.into_iter().next().and_then(|hit| {
            let abstract_text = hit.abstract_text.unwrap_or_default();
            if abstract_text.trim().is_empty() {
                None
            } else {
                Some(PaperMetadata {
                    title: hit.title.unwrap_or_else(|| title.to_string()),
                    abstract_text,
                })
            }
        }))
    }
}
