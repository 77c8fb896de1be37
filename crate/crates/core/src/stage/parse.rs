//! Strict and lenient parsing of stage-token text.
//!
//! Strict mode accepts only a full, ordered, non-overlapping block sequence
//! with nothing but whitespace between blocks, and names the first violation
//! it finds. Lenient mode recovers every well-formed block it can, drops
//! everything else, and reports each recovery as a diagnostic. Any input the
//! strict parser accepts produces the identical sequence under the lenient
//! parser with an empty diagnostics list.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{StageId, StageSchema, StageSegment, StagedSequence, SubsectionKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} at byte {offset}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("missing close token for stage {stage}")]
    MissingClose { stage: StageId },
    #[error("stage {found} appears after stage {prev}, out of order")]
    OutOfOrderStage { prev: StageId, found: StageId },
    #[error("duplicate stage {stage}")]
    DuplicateStage { stage: StageId },
    #[error("token {found:?} interleaved inside the stage {inside} block")]
    InterleavedToken { inside: StageId, found: String },
    #[error("close token for stage {stage} without a matching open token")]
    UnexpectedClose { stage: StageId },
    #[error("stage token {literal:?} outside this schema's stage range")]
    ForeignToken { literal: String },
    #[error("non-whitespace text between stage blocks")]
    StrayText,
    #[error("trailing garbage after the final stage block")]
    TrailingGarbage,
    #[error("missing stages for subsections: {}", .subsections.iter().map(|k| k.label()).collect::<Vec<_>>().join(", "))]
    MissingStages { subsections: Vec<SubsectionKind> },
}

/// What the lenient parser did to a region it could not keep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecoveryKind {
    /// An open token without its matching close immediately after the body.
    SkippedOpenToken { stage: StageId },
    /// A close token with no open token before it.
    SkippedCloseToken { stage: StageId },
    /// A token whose index lies outside the schema's stage range.
    SkippedForeignToken { literal: String },
    /// A well-formed block dropped because its stage already appeared.
    DroppedDuplicateBlock { stage: StageId },
    /// A well-formed block dropped to keep stage ids strictly increasing.
    DroppedOutOfOrderBlock { stage: StageId },
    /// Non-whitespace text outside every recovered block.
    DiscardedText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    pub kind: RecoveryKind,
    pub offset: usize,
    pub detail: String,
}

impl std::fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "byte {}: {}", self.offset, self.detail)
    }
}

/// A parsed sequence plus whatever the lenient parser had to recover from.
/// Strict parses always carry an empty diagnostics list.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSequence {
    pub sequence: StagedSequence,
    pub diagnostics: Vec<ParseDiagnostic>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokenRole {
    Open,
    Close,
}

#[derive(Debug, Clone)]
struct TokenEvent {
    stage: StageId,
    role: TokenRole,
    start: usize,
    end: usize,
    literal: String,
    /// Stage index within the schema's range (foreign tokens are scanned so
    /// they cannot hide inside bodies, but never form blocks).
    in_range: bool,
}

#[derive(Debug, Clone)]
struct Block {
    stage: StageId,
    body: String,
    span: (usize, usize),
}

/// Parses raw model output against `schema`.
///
/// Strict mode returns the first violation as an error. Lenient mode always
/// succeeds, returning every block it could recover and one diagnostic per
/// recovery action.
pub fn parse(raw: &str, schema: &StageSchema, mode: ParseMode) -> Result<ParsedSequence, ParseError> {
    let events = scan_tokens(raw, schema);
    match mode {
        ParseMode::Strict => parse_strict(raw, schema, &events),
        ParseMode::Lenient => Ok(parse_lenient(raw, schema, &events)),
    }
}

/// Finds every stage-token occurrence, earliest first. Tokens for indices in
/// `0..8` are scanned even beyond the schema's stage count so they can never
/// end up inside a recovered body.
fn scan_tokens(raw: &str, schema: &StageSchema) -> Vec<TokenEvent> {
    let stage_count = schema.stage_count();
    let literals: Vec<(String, StageId, TokenRole)> = (0..8u8)
        .flat_map(|k| {
            let id = StageId::new(k);
            [
                (schema.open_token(id), id, TokenRole::Open),
                (schema.close_token(id), id, TokenRole::Close),
            ]
        })
        .collect();

    let mut events = Vec::new();
    let mut pos = 0;
    while pos < raw.len() {
        let mut earliest: Option<(usize, &(String, StageId, TokenRole))> = None;
        for entry in &literals {
            if let Some(found) = raw[pos..].find(entry.0.as_str()) {
                let at = pos + found;
                if earliest.as_ref().is_none_or(|(best, _)| at < *best) {
                    earliest = Some((at, entry));
                }
            }
        }
        let Some((start, (literal, stage, role))) = earliest else {
            break;
        };
        let end = start + literal.len();
        events.push(TokenEvent {
            stage: *stage,
            role: *role,
            start,
            end,
            literal: literal.clone(),
            in_range: stage.index() < stage_count,
        });
        pos = end;
    }
    events
}

fn first_non_ws(raw: &str, range: std::ops::Range<usize>) -> Option<usize> {
    raw[range.clone()]
        .char_indices()
        .find(|(_, c)| !c.is_whitespace())
        .map(|(i, _)| range.start + i)
}

fn parse_strict(
    raw: &str,
    schema: &StageSchema,
    events: &[TokenEvent],
) -> Result<ParsedSequence, ParseError> {
    let mut blocks: Vec<Block> = Vec::new();
    let mut cursor = 0usize;
    let mut idx = 0usize;

    while idx < events.len() {
        let ev = &events[idx];
        if !ev.in_range {
            return Err(ParseError {
                kind: ParseErrorKind::ForeignToken {
                    literal: ev.literal.clone(),
                },
                offset: ev.start,
            });
        }
        if let Some(at) = first_non_ws(raw, cursor..ev.start) {
            return Err(ParseError {
                kind: ParseErrorKind::StrayText,
                offset: at,
            });
        }
        if ev.role == TokenRole::Close {
            return Err(ParseError {
                kind: ParseErrorKind::UnexpectedClose { stage: ev.stage },
                offset: ev.start,
            });
        }
        // Inside the block opened by `ev`: the very next token must close it.
        match events.get(idx + 1) {
            None => {
                return Err(ParseError {
                    kind: ParseErrorKind::MissingClose { stage: ev.stage },
                    offset: raw.len(),
                });
            }
            Some(next) if next.role == TokenRole::Close && next.stage == ev.stage => {
                blocks.push(Block {
                    stage: ev.stage,
                    body: raw[ev.end..next.start].to_string(),
                    span: (ev.start, next.end),
                });
                cursor = next.end;
                idx += 2;
            }
            Some(next) => {
                // A close for this stage further on means the blocks
                // interleave; otherwise the close is simply missing.
                let closes_later = events[idx + 2..]
                    .iter()
                    .any(|e| e.role == TokenRole::Close && e.stage == ev.stage);
                let kind = if closes_later {
                    ParseErrorKind::InterleavedToken {
                        inside: ev.stage,
                        found: next.literal.clone(),
                    }
                } else {
                    ParseErrorKind::MissingClose { stage: ev.stage }
                };
                return Err(ParseError {
                    kind,
                    offset: next.start,
                });
            }
        }
    }

    if let Some(at) = first_non_ws(raw, cursor..raw.len()) {
        return Err(ParseError {
            kind: if blocks.is_empty() {
                ParseErrorKind::StrayText
            } else {
                ParseErrorKind::TrailingGarbage
            },
            offset: at,
        });
    }

    // Structure is sound; now enforce order, uniqueness, and completeness.
    let mut seen: Vec<StageId> = Vec::new();
    for block in &blocks {
        if seen.contains(&block.stage) {
            return Err(ParseError {
                kind: ParseErrorKind::DuplicateStage { stage: block.stage },
                offset: block.span.0,
            });
        }
        if let Some(prev) = seen.last() {
            if block.stage < *prev {
                return Err(ParseError {
                    kind: ParseErrorKind::OutOfOrderStage {
                        prev: *prev,
                        found: block.stage,
                    },
                    offset: block.span.0,
                });
            }
        }
        seen.push(block.stage);
    }
    let missing: Vec<SubsectionKind> = {
        let granularity = schema.granularity();
        let mut subs = Vec::new();
        for id in granularity.stage_ids() {
            if !seen.contains(&id) {
                if let Some(kind) = granularity.subsection_of(id) {
                    if !subs.contains(&kind) {
                        subs.push(kind);
                    }
                }
            }
        }
        subs
    };
    if !missing.is_empty() {
        return Err(ParseError {
            kind: ParseErrorKind::MissingStages {
                subsections: missing,
            },
            offset: raw.len(),
        });
    }

    Ok(ParsedSequence {
        sequence: StagedSequence::new(schema.clone(), blocks_to_segments(blocks)),
        diagnostics: Vec::new(),
    })
}

fn blocks_to_segments(blocks: Vec<Block>) -> Vec<StageSegment> {
    blocks
        .into_iter()
        .map(|b| StageSegment {
            stage: b.stage,
            body: b.body,
            source_span: Some(b.span),
        })
        .collect()
}

fn snippet(raw: &str, start: usize) -> String {
    let end = raw[start..]
        .char_indices()
        .take(24)
        .last()
        .map(|(i, c)| start + i + c.len_utf8())
        .unwrap_or(raw.len());
    raw[start..end].trim_end().to_string()
}

fn parse_lenient(raw: &str, schema: &StageSchema, events: &[TokenEvent]) -> ParsedSequence {
    let mut diagnostics = Vec::new();
    let mut blocks: Vec<Block> = Vec::new();
    // Spans of every token or block already explained by some diagnostic or
    // kept block, so stray-text detection only reports truly orphaned text.
    let mut covered: Vec<(usize, usize)> = Vec::new();

    let mut idx = 0usize;
    while idx < events.len() {
        let ev = &events[idx];
        if !ev.in_range {
            diagnostics.push(ParseDiagnostic {
                kind: RecoveryKind::SkippedForeignToken {
                    literal: ev.literal.clone(),
                },
                offset: ev.start,
                detail: format!("skipped out-of-schema token {:?}", ev.literal),
            });
            covered.push((ev.start, ev.end));
            idx += 1;
            continue;
        }
        match ev.role {
            TokenRole::Open => {
                let next = events.get(idx + 1);
                if let Some(next) = next {
                    if next.role == TokenRole::Close && next.stage == ev.stage && next.in_range {
                        blocks.push(Block {
                            stage: ev.stage,
                            body: raw[ev.end..next.start].to_string(),
                            span: (ev.start, next.end),
                        });
                        covered.push((ev.start, next.end));
                        idx += 2;
                        continue;
                    }
                }
                diagnostics.push(ParseDiagnostic {
                    kind: RecoveryKind::SkippedOpenToken { stage: ev.stage },
                    offset: ev.start,
                    detail: format!("open token for stage {} has no matching close", ev.stage),
                });
                covered.push((ev.start, ev.end));
                idx += 1;
            }
            TokenRole::Close => {
                diagnostics.push(ParseDiagnostic {
                    kind: RecoveryKind::SkippedCloseToken { stage: ev.stage },
                    offset: ev.start,
                    detail: format!("close token for stage {} has no matching open", ev.stage),
                });
                covered.push((ev.start, ev.end));
                idx += 1;
            }
        }
    }

    // Keep the best strictly-increasing run of blocks; drop the rest with a
    // diagnostic each. Ties prefer the earliest blocks in text order.
    let keep = longest_increasing_blocks(&blocks);
    let mut kept: Vec<Block> = Vec::new();
    for (i, block) in blocks.iter().enumerate() {
        if keep.contains(&i) {
            kept.push(block.clone());
        } else {
            let duplicate = blocks
                .iter()
                .enumerate()
                .any(|(j, other)| keep.contains(&j) && other.stage == block.stage);
            let (kind, what) = if duplicate {
                (
                    RecoveryKind::DroppedDuplicateBlock { stage: block.stage },
                    "duplicate",
                )
            } else {
                (
                    RecoveryKind::DroppedOutOfOrderBlock { stage: block.stage },
                    "out-of-order",
                )
            };
            diagnostics.push(ParseDiagnostic {
                kind,
                offset: block.span.0,
                detail: format!("dropped {what} block for stage {}", block.stage),
            });
        }
    }

    // Anything outside the covered spans that is not whitespace was produced
    // by the model but has no stage identity; it is discarded, not attached.
    covered.sort_unstable();
    let mut cursor = 0usize;
    let mut gaps: Vec<(usize, usize)> = Vec::new();
    for (start, end) in &covered {
        if *start > cursor {
            gaps.push((cursor, *start));
        }
        cursor = cursor.max(*end);
    }
    if cursor < raw.len() {
        gaps.push((cursor, raw.len()));
    }
    for (start, end) in gaps {
        if let Some(at) = first_non_ws(raw, start..end) {
            diagnostics.push(ParseDiagnostic {
                kind: RecoveryKind::DiscardedText,
                offset: at,
                detail: format!("discarded stray text {:?}", snippet(raw, at)),
            });
        }
    }

    diagnostics.sort_by_key(|d| d.offset);
    ParsedSequence {
        sequence: StagedSequence::new(schema.clone(), blocks_to_segments(kept)),
        diagnostics,
    }
}

/// Indices of a longest strictly-increasing (by stage id) subsequence of
/// `blocks`, preferring earlier blocks on ties.
fn longest_increasing_blocks(blocks: &[Block]) -> Vec<usize> {
    let n = blocks.len();
    if n == 0 {
        return Vec::new();
    }
    let mut len = vec![1usize; n];
    let mut prev = vec![usize::MAX; n];
    for i in 0..n {
        for j in 0..i {
            if blocks[j].stage < blocks[i].stage && len[j] + 1 > len[i] {
                len[i] = len[j] + 1;
                prev[i] = j;
            }
        }
    }
    let best = (0..n)
        .max_by(|a, b| len[*a].cmp(&len[*b]).then(b.cmp(a)))
        .unwrap();
    let mut keep = Vec::new();
    let mut at = best;
    loop {
        keep.push(at);
        if prev[at] == usize::MAX {
            break;
        }
        at = prev[at];
    }
    keep.reverse();
    keep
}
