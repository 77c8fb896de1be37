//! Introduction annotation through an external annotator client.
//!
//! The annotator receives the versioned annotation prompt with the
//! introduction filled in and replies with a JSON object keyed `sections`
//! and `outline`. Replies are validated before acceptance; one corrective
//! re-prompt is attempted, then the sample is rejected.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::AnnotatedIntroduction;
use crate::assets;
use crate::stage::SubsectionKind;
use crate::text::{normalize_whitespace, split_sentences};

/// Sends one prompt to the annotation model and returns its raw reply text.
/// Implementations must be safe for concurrent calls or serialize internally.
pub trait AnnotatorClient: Send + Sync {
    fn annotate(&self, prompt: &str) -> Result<String, AnnotateError>;
}

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("annotator client error: {0}")]
    Client(String),
    #[error("unparseable annotator reply: {0}")]
    Format(String),
    #[error("annotation rejected after retry: {}", format_violations(.violations))]
    Rejected { violations: Vec<AnnotationViolation> },
}

fn format_violations(violations: &[AnnotationViolation]) -> String {
    violations
        .iter()
        .map(|v| v.message.clone())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Outline point-count bounds per subsection, applied when the section text
/// is non-empty.
pub fn point_bounds(kind: SubsectionKind) -> (usize, usize) {
    match kind {
        SubsectionKind::Background => (2, 4),
        SubsectionKind::ProblemAndLimitations => (2, 6),
        SubsectionKind::MethodOverviewAndResults => (4, 8),
        SubsectionKind::Contributions => (2, 3),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationViolationCode {
    MissingSectionKey,
    MissingOutlineKey,
    PointCountOutOfBounds,
    EmptySectionWithPoints,
    SectionOutOfOrder,
    SectionNotContiguous,
    IncompleteCoverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationViolation {
    pub code: AnnotationViolationCode,
    pub section: Option<SubsectionKind>,
    pub message: String,
}

fn violation(
    code: AnnotationViolationCode,
    section: Option<SubsectionKind>,
    message: String,
) -> AnnotationViolation {
    AnnotationViolation {
        code,
        section,
        message,
    }
}

/// Fills the annotation prompt template with the introduction text.
pub fn annotation_prompt(introduction: &str) -> String {
    assets::ANNOTATION_PROMPT.replace("{text}", introduction)
}

#[derive(Deserialize)]
struct ReplyRepr {
    sections: BTreeMap<String, String>,
    outline: BTreeMap<String, Vec<String>>,
}

/// Parses a raw annotator reply: locates the JSON object (markdown fences and
/// surrounding prose tolerated) and maps the protocol's section names onto
/// subsection kinds.
pub fn parse_annotation_reply(reply: &str) -> Result<AnnotatedIntroduction, AnnotateError> {
    let start = reply
        .find('{')
        .ok_or_else(|| AnnotateError::Format("no JSON object in reply".into()))?;
    let end = reply
        .rfind('}')
        .ok_or_else(|| AnnotateError::Format("no JSON object in reply".into()))?;
    if end < start {
        return Err(AnnotateError::Format("no JSON object in reply".into()));
    }
    let repr: ReplyRepr = serde_json::from_str(&reply[start..=end])
        .map_err(|e| AnnotateError::Format(e.to_string()))?;

    let mut sections = BTreeMap::new();
    for (name, text) in repr.sections {
        let kind = SubsectionKind::from_label(&name)
            .ok_or_else(|| AnnotateError::Format(format!("unknown section name {name:?}")))?;
        sections.insert(kind, text);
    }
    let mut outline = BTreeMap::new();
    for (name, points) in repr.outline {
        let kind = SubsectionKind::from_label(&name)
            .ok_or_else(|| AnnotateError::Format(format!("unknown outline name {name:?}")))?;
        outline.insert(kind, points);
    }
    Ok(AnnotatedIntroduction { sections, outline })
}

/// Checks an annotation against the original introduction: key completeness,
/// outline point-count bounds, and section ordering/contiguity (each section
/// must be a contiguous, in-order run of the original's sentences, and the
/// four sections together must cover them all). Violations are data, not
/// errors.
pub fn validate_annotation(
    annotation: &AnnotatedIntroduction,
    original_introduction: &str,
) -> Vec<AnnotationViolation> {
    let mut violations = Vec::new();

    for kind in SubsectionKind::ALL {
        if !annotation.sections.contains_key(&kind) {
            violations.push(violation(
                AnnotationViolationCode::MissingSectionKey,
                Some(kind),
                format!("sections map is missing {:?}", kind.label()),
            ));
        }
        if !annotation.outline.contains_key(&kind) {
            violations.push(violation(
                AnnotationViolationCode::MissingOutlineKey,
                Some(kind),
                format!("outline map is missing {:?}", kind.label()),
            ));
        }
    }

    for kind in SubsectionKind::ALL {
        let text = annotation.section(kind);
        let points = annotation.points(kind);
        if text.trim().is_empty() {
            if !points.is_empty() {
                violations.push(violation(
                    AnnotationViolationCode::EmptySectionWithPoints,
                    Some(kind),
                    format!("{:?} has outline points but an empty section", kind.label()),
                ));
            }
            continue;
        }
        let (min, max) = point_bounds(kind);
        if points.len() < min || points.len() > max {
            violations.push(violation(
                AnnotationViolationCode::PointCountOutOfBounds,
                Some(kind),
                format!(
                    "{:?} has {} outline points, expected {min}-{max}",
                    kind.label(),
                    points.len()
                ),
            ));
        }
    }

    violations.extend(check_contiguity(annotation, original_introduction));
    violations
}

/// Sentence-level partition check: walks the original's sentences with a
/// cursor and requires each non-empty section to match the next contiguous
/// window, under whitespace normalization.
fn check_contiguity(
    annotation: &AnnotatedIntroduction,
    original_introduction: &str,
) -> Vec<AnnotationViolation> {
    let mut violations = Vec::new();
    let original: Vec<String> = split_sentences(original_introduction)
        .iter()
        .map(|s| normalize_whitespace(s))
        .collect();

    let mut cursor = 0usize;
    let mut ordered = true;
    for kind in SubsectionKind::ALL {
        let text = annotation.section(kind);
        if text.trim().is_empty() {
            continue;
        }
        let sentences: Vec<String> = split_sentences(text)
            .iter()
            .map(|s| normalize_whitespace(s))
            .collect();
        if matches_window(&original, cursor, &sentences) {
            cursor += sentences.len();
            continue;
        }
        // Not at the cursor: distinguish misplacement from free paraphrase.
        if let Some(found) = find_window(&original, &sentences) {
            violations.push(violation(
                AnnotationViolationCode::SectionOutOfOrder,
                Some(kind),
                format!(
                    "{:?} starts at original sentence {found}, expected sentence {cursor}",
                    kind.label()
                ),
            ));
            cursor = found + sentences.len();
        } else {
            violations.push(violation(
                AnnotationViolationCode::SectionNotContiguous,
                Some(kind),
                format!(
                    "{:?} is not a contiguous run of the original introduction's sentences",
                    kind.label()
                ),
            ));
            ordered = false;
        }
    }
    if ordered && violations.is_empty() && cursor != original.len() {
        violations.push(violation(
            AnnotationViolationCode::IncompleteCoverage,
            None,
            format!(
                "sections cover {cursor} of {} original sentences",
                original.len()
            ),
        ));
    }
    violations
}

fn matches_window(original: &[String], at: usize, window: &[String]) -> bool {
    at + window.len() <= original.len() && &original[at..at + window.len()] == window
}

fn find_window(original: &[String], window: &[String]) -> Option<usize> {
    if window.is_empty() || window.len() > original.len() {
        return None;
    }
    (0..=original.len() - window.len()).find(|&i| matches_window(original, i, window))
}

/// Runs the annotation protocol: prompt, parse, validate; on violations, one
/// corrective re-prompt with the violations appended, then rejection.
pub fn annotate_introduction(
    introduction: &str,
    client: &dyn AnnotatorClient,
) -> Result<AnnotatedIntroduction, AnnotateError> {
    let prompt = annotation_prompt(introduction);
    let reply = client.annotate(&prompt)?;
    let annotation = parse_annotation_reply(&reply)?;
    let violations = validate_annotation(&annotation, introduction);
    if violations.is_empty() {
        return Ok(annotation);
    }

    let mut retry_prompt = prompt;
    retry_prompt.push_str("\n\nYour previous reply violated these constraints:\n");
    for v in &violations {
        retry_prompt.push_str("- ");
        retry_prompt.push_str(&v.message);
        retry_prompt.push('\n');
    }
    retry_prompt.push_str("Please produce a corrected reply in the same JSON format.");

    let reply = client.annotate(&retry_prompt)?;
    let annotation = parse_annotation_reply(&reply)?;
    let violations = validate_annotation(&annotation, introduction);
    if violations.is_empty() {
        Ok(annotation)
    } else {
        Err(AnnotateError::Rejected { violations })
    }
}

/// Deterministic annotator: partitions the introduction's sentences into four
/// contiguous runs and derives outline points from each run. Always produces
/// a reply in the protocol's JSON format; the annotation validates cleanly
/// for introductions of four or more sentences.
#[derive(Debug, Default)]
pub struct MockAnnotatorClient;

impl MockAnnotatorClient {
    fn introduction_from_prompt(prompt: &str) -> &str {
        let after = prompt
            .split_once("Introduction content:\n")
            .map(|(_, rest)| rest)
            .unwrap_or(prompt);
        after.split("\n\nNotes:").next().unwrap_or(after).trim()
    }

    fn outline_points(kind: SubsectionKind, sentences: &[String]) -> Vec<String> {
        let (min, max) = point_bounds(kind);
        let count = sentences.len().clamp(min, max);
        (0..count)
            .map(|i| {
                let src = &sentences[i % sentences.len()];
                let head: String = src
                    .split_whitespace()
                    .take(8)
                    .collect::<Vec<_>>()
                    .join(" ");
                let head = head.trim_end_matches(['.', ',', ';']);
                if i < sentences.len() {
                    format!("{head}.")
                } else {
                    format!("{head} (detail {}).", i + 1)
                }
            })
            .collect()
    }
}

impl AnnotatorClient for MockAnnotatorClient {
    fn annotate(&self, prompt: &str) -> Result<String, AnnotateError> {
        let introduction = Self::introduction_from_prompt(prompt);
        let sentences = split_sentences(introduction);
        let n = sentences.len();
        // Contiguous quarter split; the method run absorbs the remainder and
        // contributions stay empty when the text is too short for four runs.
        let b = (n / 4).max(1).min(n);
        let p = (n / 4).max(1).min(n.saturating_sub(b));
        let c = if n >= b + p + 2 {
            (n / 4).max(1).min(n - b - p - 1)
        } else {
            0
        };
        let m = n - b - p - c;
        let bounds = [b, p, m, c];

        let mut sections = serde_json::Map::new();
        let mut outline = serde_json::Map::new();
        let mut at = 0usize;
        for (kind, len) in SubsectionKind::ALL.into_iter().zip(bounds) {
            let run = &sentences[at..at + len];
            at += len;
            let text = run.join(" ");
            let points = if text.is_empty() {
                Vec::new()
            } else {
                Self::outline_points(kind, run)
            };
            sections.insert(kind.label().to_string(), serde_json::Value::String(text));
            outline.insert(
                kind.label().to_string(),
                serde_json::Value::Array(
                    points.into_iter().map(serde_json::Value::String).collect(),
                ),
            );
        }
        let reply = serde_json::json!({ "sections": sections, "outline": outline });
        Ok(serde_json::to_string_pretty(&reply).expect("maps of strings serialize"))
    }
}

/// Replays a fixed queue of replies; records the prompts it received.
#[derive(Debug, Default)]
pub struct ScriptedAnnotatorClient {
    replies: Mutex<Vec<String>>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedAnnotatorClient {
    pub fn new(replies: Vec<String>) -> Self {
        ScriptedAnnotatorClient {
            replies: Mutex::new(replies),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }
}

impl AnnotatorClient for ScriptedAnnotatorClient {
    fn annotate(&self, prompt: &str) -> Result<String, AnnotateError> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        let mut replies = self.replies.lock().unwrap();
        if replies.is_empty() {
            Err(AnnotateError::Client("scripted replies exhausted".into()))
        } else {
            Ok(replies.remove(0))
        }
    }
}

/// Replays recorded replies keyed by the SHA-256 of the prompt, from a
/// line-delimited file of `{"sha256": ..., "reply": ...}` records.
#[derive(Debug)]
pub struct RecordedAnnotatorClient {
    records: HashMap<String, String>,
}

#[derive(Deserialize)]
struct RecordedReply {
    sha256: String,
    reply: String,
}

impl RecordedAnnotatorClient {
    pub fn from_jsonl_file(path: &std::path::Path) -> std::io::Result<Self> {
        let data = std::fs::read_to_string(path)?;
        let mut records = HashMap::new();
        for line in data.lines().filter(|l| !l.trim().is_empty()) {
            let record: RecordedReply = serde_json::from_str(line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            records.insert(record.sha256, record.reply);
        }
        Ok(RecordedAnnotatorClient { records })
    }

    pub fn prompt_digest(prompt: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(prompt.as_bytes());
        format!("{:x}", hasher.finalize())
    }
}

impl AnnotatorClient for RecordedAnnotatorClient {
    fn annotate(&self, prompt: &str) -> Result<String, AnnotateError> {
        let digest = Self::prompt_digest(prompt);
        self.records
            .get(&digest)
            .cloned()
            .ok_or_else(|| AnnotateError::Client(format!("no recorded reply for prompt {digest}")))
    }
}

/// Live annotator against an OpenAI-style chat-completions endpoint.
pub struct HttpAnnotatorClient {
    endpoint: String,
    api_key: String,
    model: String,
    client: reqwest::blocking::Client,
}

impl HttpAnnotatorClient {
    pub const DEFAULT_ENDPOINT: &'static str = "https://api.openai.com/v1/chat/completions";
    pub const DEFAULT_MODEL: &'static str = "gpt-4o";

    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>) -> Self {
        HttpAnnotatorClient {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            model: model.into(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("default TLS backend available"),
        }
    }
}

impl AnnotatorClient for HttpAnnotatorClient {
    fn annotate(&self, prompt: &str) -> Result<String, AnnotateError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0.0,
        });
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| AnnotateError::Client(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(AnnotateError::Client(format!("HTTP {status}")));
        }
        let value: serde_json::Value = response
            .json()
            .map_err(|e| AnnotateError::Client(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| AnnotateError::Client("reply has no message content".into()))
    }
}
