//! Stage-token vocabulary and sequence grammar.
//!
//! A staged output wraps each functional block of an introduction in a
//! reserved delimiter pair such as `<STAGE0>`/`<END0>`. The eight-stage
//! schema alternates outline and content blocks across the four canonical
//! subsections; the four-stage schema keeps one content block per subsection
//! and drops the outlines. This module defines the vocabulary, parses and
//! renders staged text, validates sequences, and extracts the final
//! introduction from a complete sequence.

mod parse;

pub use parse::{
    parse, ParseDiagnostic, ParseError, ParseErrorKind, ParseMode, ParsedSequence, RecoveryKind,
};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The four canonical introduction subsections, in writing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SubsectionKind {
    #[serde(rename = "Background")]
    Background,
    #[serde(rename = "Problem and Limitations of Existing Methods")]
    ProblemAndLimitations,
    #[serde(rename = "Brief Method Overview and Summary of Main Results")]
    MethodOverviewAndResults,
    #[serde(rename = "Our Contributions")]
    Contributions,
}

impl SubsectionKind {
    /// Canonical order: Background first, Contributions last.
    pub const ALL: [SubsectionKind; 4] = [
        SubsectionKind::Background,
        SubsectionKind::ProblemAndLimitations,
        SubsectionKind::MethodOverviewAndResults,
        SubsectionKind::Contributions,
    ];

    /// Position in the canonical order, 0..=3.
    pub fn index(self) -> usize {
        match self {
            SubsectionKind::Background => 0,
            SubsectionKind::ProblemAndLimitations => 1,
            SubsectionKind::MethodOverviewAndResults => 2,
            SubsectionKind::Contributions => 3,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// The section name used by the annotation protocol and serialized files.
    pub fn label(self) -> &'static str {
        match self {
            SubsectionKind::Background => "Background",
            SubsectionKind::ProblemAndLimitations => "Problem and Limitations of Existing Methods",
            SubsectionKind::MethodOverviewAndResults => {
                "Brief Method Overview and Summary of Main Results"
            }
            SubsectionKind::Contributions => "Our Contributions",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.label() == label)
    }

    /// Short snake-case name for step ids and file names.
    pub fn slug(self) -> &'static str {
        match self {
            SubsectionKind::Background => "background",
            SubsectionKind::ProblemAndLimitations => "problem_and_limitations",
            SubsectionKind::MethodOverviewAndResults => "method_overview_and_results",
            SubsectionKind::Contributions => "contributions",
        }
    }
}

impl fmt::Display for SubsectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Whether a stage carries an outline (key-point list) or prose content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageRole {
    Outline,
    Content,
}

/// Index of one stage within a schema, in `[0, S-1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StageId(u8);

impl StageId {
    pub const fn new(index: u8) -> Self {
        StageId(index)
    }

    pub const fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Schema size: eight stages (outline + content per subsection) or four
/// stages (content only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    EightStage,
    FourStage,
}

impl Granularity {
    pub fn stage_count(self) -> usize {
        match self {
            Granularity::EightStage => 8,
            Granularity::FourStage => 4,
        }
    }

    pub fn stage_ids(self) -> impl Iterator<Item = StageId> {
        (0..self.stage_count() as u8).map(StageId::new)
    }

    /// Subsection a stage belongs to. Eight-stage: stage `2j` and `2j+1` map
    /// to subsection `j`; four-stage: stage `j` maps to subsection `j`.
    pub fn subsection_of(self, stage: StageId) -> Option<SubsectionKind> {
        if stage.index() >= self.stage_count() {
            return None;
        }
        let j = match self {
            Granularity::EightStage => stage.index() / 2,
            Granularity::FourStage => stage.index(),
        };
        SubsectionKind::from_index(j)
    }

    pub fn role_of(self, stage: StageId) -> Option<StageRole> {
        if stage.index() >= self.stage_count() {
            return None;
        }
        Some(match self {
            Granularity::EightStage if stage.index() % 2 == 0 => StageRole::Outline,
            _ => StageRole::Content,
        })
    }

    /// Inverse mapping; `None` for outline stages under the four-stage schema.
    pub fn stage_for(self, subsection: SubsectionKind, role: StageRole) -> Option<StageId> {
        match (self, role) {
            (Granularity::EightStage, StageRole::Outline) => {
                Some(StageId::new((subsection.index() * 2) as u8))
            }
            (Granularity::EightStage, StageRole::Content) => {
                Some(StageId::new((subsection.index() * 2 + 1) as u8))
            }
            (Granularity::FourStage, StageRole::Content) => {
                Some(StageId::new(subsection.index() as u8))
            }
            (Granularity::FourStage, StageRole::Outline) => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("token template {0:?} does not contain the {{k}} placeholder")]
    MissingPlaceholder(String),
    #[error("token templates produce colliding literals: {0:?} and {1:?}")]
    CollidingLiterals(String, String),
}

/// Token templates plus granularity. The default templates produce the
/// `<STAGEk>`/`<ENDk>` literals with no interior whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSchema {
    granularity: Granularity,
    open_template: String,
    close_template: String,
}

pub const DEFAULT_OPEN_TEMPLATE: &str = "<STAGE{k}>";
pub const DEFAULT_CLOSE_TEMPLATE: &str = "<END{k}>";

/// Token literals are checked for indices `0..LITERAL_CHECK_RANGE` regardless
/// of granularity, so a four-stage body smuggling `<STAGE6>` is still caught.
const LITERAL_CHECK_RANGE: usize = 8;

impl StageSchema {
    pub fn eight() -> Self {
        StageSchema {
            granularity: Granularity::EightStage,
            open_template: DEFAULT_OPEN_TEMPLATE.to_string(),
            close_template: DEFAULT_CLOSE_TEMPLATE.to_string(),
        }
    }

    pub fn four() -> Self {
        StageSchema {
            granularity: Granularity::FourStage,
            open_template: DEFAULT_OPEN_TEMPLATE.to_string(),
            close_template: DEFAULT_CLOSE_TEMPLATE.to_string(),
        }
    }

    pub fn for_granularity(granularity: Granularity) -> Self {
        match granularity {
            Granularity::EightStage => Self::eight(),
            Granularity::FourStage => Self::four(),
        }
    }

    /// Builds a schema with custom templates, rejecting templates whose
    /// literals collide or nest within one another.
    pub fn with_templates(
        granularity: Granularity,
        open_template: &str,
        close_template: &str,
    ) -> Result<Self, SchemaError> {
        for t in [open_template, close_template] {
            if !t.contains("{k}") {
                return Err(SchemaError::MissingPlaceholder(t.to_string()));
            }
        }
        let schema = StageSchema {
            granularity,
            open_template: open_template.to_string(),
            close_template: close_template.to_string(),
        };
        let literals: Vec<String> = (0..LITERAL_CHECK_RANGE)
            .flat_map(|k| {
                [
                    schema.open_token(StageId::new(k as u8)),
                    schema.close_token(StageId::new(k as u8)),
                ]
            })
            .collect();
        for (i, a) in literals.iter().enumerate() {
            for b in literals.iter().skip(i + 1) {
                if a.contains(b.as_str()) || b.contains(a.as_str()) {
                    return Err(SchemaError::CollidingLiterals(a.clone(), b.clone()));
                }
            }
        }
        Ok(schema)
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn stage_count(&self) -> usize {
        self.granularity.stage_count()
    }

    pub(crate) fn open_token(&self, stage: StageId) -> String {
        self.open_template.replace("{k}", &stage.index().to_string())
    }

    pub(crate) fn close_token(&self, stage: StageId) -> String {
        self.close_template.replace("{k}", &stage.index().to_string())
    }

    /// The `(open, close)` delimiter literals for a stage.
    pub fn token_pair(&self, stage: StageId) -> Result<(String, String), StageError> {
        if stage.index() >= self.stage_count() {
            return Err(StageError::InvalidStage {
                stage,
                stage_count: self.stage_count(),
            });
        }
        Ok((self.open_token(stage), self.close_token(stage)))
    }

    /// True if `text` contains any stage-token literal for indices in
    /// `0..8`, under this schema's templates.
    pub fn contains_token_literal(&self, text: &str) -> bool {
        (0..LITERAL_CHECK_RANGE).any(|k| {
            let id = StageId::new(k as u8);
            text.contains(&self.open_token(id)) || text.contains(&self.close_token(id))
        })
    }
}

impl Default for StageSchema {
    fn default() -> Self {
        Self::eight()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum StageError {
    #[error("stage {stage} out of range for a {stage_count}-stage schema")]
    InvalidStage { stage: StageId, stage_count: usize },
}

/// One delimited block: the stage id and the body between the delimiters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSegment {
    pub stage: StageId,
    pub body: String,
    /// Byte offsets of the block (delimiters included) in the raw text this
    /// segment was parsed from, when it was parsed at all.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source_span: Option<(usize, usize)>,
}

impl StageSegment {
    pub fn new(stage: StageId, body: impl Into<String>) -> Self {
        StageSegment {
            stage,
            body: body.into(),
            source_span: None,
        }
    }
}

/// An ordered list of stage segments under a schema.
#[derive(Debug, Clone, Eq, Serialize, Deserialize)]
pub struct StagedSequence {
    pub schema: StageSchema,
    pub segments: Vec<StageSegment>,
}

/// Equality compares the schema and the `(stage, body)` pairs. Source spans
/// are provenance, not content, and do not participate.
impl PartialEq for StagedSequence {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema
            && self.segments.len() == other.segments.len()
            && self
                .segments
                .iter()
                .zip(&other.segments)
                .all(|(a, b)| a.stage == b.stage && a.body == b.body)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("segment for stage {stage} contains a stage-token literal in its body")]
    BodyContainsToken { stage: StageId },
}

#[derive(Debug, Error, PartialEq)]
pub enum ExtractError {
    #[error("sequence is missing stages for subsections: {}", format_subsections(.missing))]
    MissingStages { missing: Vec<SubsectionKind> },
}

fn format_subsections(missing: &[SubsectionKind]) -> String {
    missing
        .iter()
        .map(|k| k.label())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Machine-readable code for a sequence-invariant violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    OutOfOrder,
    DuplicateStage,
    StageOutOfRange,
    BodyContainsToken,
    MissingStage,
    GranularityMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub stage: Option<StageId>,
    pub message: String,
}

impl StagedSequence {
    pub fn new(schema: StageSchema, segments: Vec<StageSegment>) -> Self {
        StagedSequence { schema, segments }
    }

    pub fn empty(schema: StageSchema) -> Self {
        StagedSequence {
            schema,
            segments: Vec::new(),
        }
    }

    /// A sequence is complete when every stage id of its schema is present.
    pub fn is_complete(&self) -> bool {
        self.missing_stage_ids().is_empty()
    }

    fn missing_stage_ids(&self) -> Vec<StageId> {
        self.schema
            .granularity()
            .stage_ids()
            .filter(|id| !self.segments.iter().any(|s| s.stage == *id))
            .collect()
    }

    pub fn segment(&self, stage: StageId) -> Option<&StageSegment> {
        self.segments.iter().find(|s| s.stage == stage)
    }

    /// Emits the blocks in order as `open + body + close`, joined by single
    /// newlines. Right inverse of a Strict parse.
    pub fn render(&self) -> Result<String, RenderError> {
        let mut blocks = Vec::with_capacity(self.segments.len());
        for seg in &self.segments {
            if self.schema.contains_token_literal(&seg.body) {
                return Err(RenderError::BodyContainsToken { stage: seg.stage });
            }
            let open = self.schema.open_token(seg.stage);
            let close = self.schema.close_token(seg.stage);
            blocks.push(format!("{open}{}{close}", seg.body));
        }
        Ok(blocks.join("\n"))
    }

    /// Concatenates the content-role bodies in subsection order, separated by
    /// one blank line. Outline bodies are discarded; the output carries no
    /// stage-token literal.
    pub fn extract_introduction(&self) -> Result<String, ExtractError> {
        let missing = self.missing_stage_ids();
        if !missing.is_empty() {
            let granularity = self.schema.granularity();
            let mut subsections: Vec<SubsectionKind> = Vec::new();
            for id in missing {
                if let Some(kind) = granularity.subsection_of(id) {
                    if !subsections.contains(&kind) {
                        subsections.push(kind);
                    }
                }
            }
            return Err(ExtractError::MissingStages {
                missing: subsections,
            });
        }
        let granularity = self.schema.granularity();
        let mut parts = Vec::new();
        for kind in SubsectionKind::ALL {
            let stage = granularity
                .stage_for(kind, StageRole::Content)
                .expect("content stage exists for every subsection");
            if let Some(seg) = self.segment(stage) {
                let body = seg.body.trim();
                if !body.is_empty() {
                    parts.push(body.to_string());
                }
            }
        }
        Ok(parts.join("\n\n"))
    }

    /// Checks every sequence invariant against `schema`, including
    /// completeness. Violations are data, not errors: an empty list means
    /// the sequence is a complete, well-formed staged sequence.
    pub fn validate(&self, schema: &StageSchema) -> Vec<Violation> {
        let mut violations = Vec::new();
        if self.schema.granularity() != schema.granularity() {
            violations.push(Violation {
                code: ViolationCode::GranularityMismatch,
                stage: None,
                message: format!(
                    "sequence built for {:?} validated against {:?}",
                    self.schema.granularity(),
                    schema.granularity()
                ),
            });
        }
        let stage_count = schema.stage_count();
        let mut seen: Vec<StageId> = Vec::new();
        for seg in &self.segments {
            if seg.stage.index() >= stage_count {
                violations.push(Violation {
                    code: ViolationCode::StageOutOfRange,
                    stage: Some(seg.stage),
                    message: format!("stage {} out of range for {stage_count} stages", seg.stage),
                });
                continue;
            }
            if seen.contains(&seg.stage) {
                violations.push(Violation {
                    code: ViolationCode::DuplicateStage,
                    stage: Some(seg.stage),
                    message: format!("stage {} appears more than once", seg.stage),
                });
            } else if seen.last().is_some_and(|last| seg.stage < *last) {
                violations.push(Violation {
                    code: ViolationCode::OutOfOrder,
                    stage: Some(seg.stage),
                    message: format!("stage {} appears after a later stage", seg.stage),
                });
            }
            if schema.contains_token_literal(&seg.body) {
                violations.push(Violation {
                    code: ViolationCode::BodyContainsToken,
                    stage: Some(seg.stage),
                    message: format!("body of stage {} contains a stage-token literal", seg.stage),
                });
            }
            seen.push(seg.stage);
        }
        for id in schema.granularity().stage_ids() {
            if !self.segments.iter().any(|s| s.stage == id) {
                violations.push(Violation {
                    code: ViolationCode::MissingStage,
                    stage: Some(id),
                    message: format!("stage {id} is absent"),
                });
            }
        }
        violations
    }
}
