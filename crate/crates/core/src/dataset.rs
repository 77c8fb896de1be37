//! Instruction-tuning dataset emission.
//!
//! Converts corpus samples into training records for the staged-output
//! variants (eight- and four-stage), the eight per-stage writing groups
//! (teacher-forced on ground-truth prior stages), and the plain fine-tuning
//! ablation, and writes the special-token registry the training framework
//! needs to extend its vocabulary.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assets;
use crate::corpus::{validate_annotation, AnnotatedIntroduction, AnnotationViolation, CoreMaterials, CorpusSample, Split};
use crate::stage::{
    Granularity, StageId, StageRole, StageSchema, StageSegment, StagedSequence, SubsectionKind,
};

/// Which training set a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    Stig8,
    Stig4,
    StageGroup(u8),
    FtPlain,
}

impl Variant {
    pub fn as_str(&self) -> String {
        match self {
            Variant::Stig8 => "stig8".into(),
            Variant::Stig4 => "stig4".into(),
            Variant::StageGroup(k) => format!("stage_group_{k}"),
            Variant::FtPlain => "ftplain".into(),
        }
    }

    pub fn from_str_name(name: &str) -> Option<Variant> {
        match name {
            "stig8" => Some(Variant::Stig8),
            "stig4" => Some(Variant::Stig4),
            "ftplain" => Some(Variant::FtPlain),
            _ => name
                .strip_prefix("stage_group_")
                .and_then(|k| k.parse::<u8>().ok())
                .filter(|k| *k < 8)
                .map(Variant::StageGroup),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_str())
    }
}

impl Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.as_str())
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        Variant::from_str_name(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown variant {name:?}")))
    }
}

/// One instruction-tuning example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub variant: Variant,
    pub paper_id: String,
}

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("paper {paper_id}: annotation invalid: {}", .violations.iter().map(|v| v.message.clone()).collect::<Vec<_>>().join("; "))]
    InvalidAnnotation {
        paper_id: String,
        violations: Vec<AnnotationViolation>,
    },
    #[error("paper {paper_id}: {source}")]
    Unrenderable {
        paper_id: String,
        #[source]
        source: crate::stage::RenderError,
    },
}

/// Deterministic template fill of the core materials: title, abstract, then
/// enumerated figures, tables, and baseline-reference abstracts. Missing
/// material renders as an explicit "None".
pub fn build_input_prompt(core: &CoreMaterials) -> String {
    format!(
        "Given title: {}\n\nGiven abstract: {}\n\nGiven figures: {}\n\nGiven tables: {}\n\n\
         Given references (These baseline references only exist in experiments): {}",
        core.title,
        core.abstract_text,
        render_figures(core),
        render_tables(core),
        render_references(core),
    )
}

pub(crate) fn render_figures(core: &CoreMaterials) -> String {
    if core.figure_descriptions.is_empty() {
        return "None".into();
    }
    core.figure_descriptions
        .iter()
        .enumerate()
        .map(|(i, d)| format!("\nFigure {}: {d}", i + 1))
        .collect()
}

pub(crate) fn render_tables(core: &CoreMaterials) -> String {
    if core.table_materials.is_empty() {
        return "None".into();
    }
    core.table_materials
        .iter()
        .enumerate()
        .map(|(i, t)| format!("\nTable {}: {}\n{}", i + 1, t.description, t.content))
        .collect()
}

pub(crate) fn render_references(core: &CoreMaterials) -> String {
    if core.baseline_abstracts.is_empty() {
        return "None".into();
    }
    core.baseline_abstracts
        .iter()
        .enumerate()
        .map(|(i, r)| {
            format!(
                "\nReference {} ({}): {}\n{}",
                i + 1,
                r.citation_key,
                r.title,
                r.abstract_text
            )
        })
        .collect()
}

/// Body text for each stage of `granularity`, from an annotation. Outline
/// stages render their points as "--point" lines; an empty outline renders
/// as a bare "--" list marker. Content stages carry the section text.
pub fn stage_bodies(annotation: &AnnotatedIntroduction, granularity: Granularity) -> Vec<String> {
    granularity
        .stage_ids()
        .map(|id| {
            let kind = granularity.subsection_of(id).expect("id in range");
            match granularity.role_of(id).expect("id in range") {
                StageRole::Outline => {
                    let points = annotation.points(kind);
                    if points.is_empty() {
                        "--".to_string()
                    } else {
                        points
                            .iter()
                            .map(|p| format!("--{p}"))
                            .collect::<Vec<_>>()
                            .join("\n")
                    }
                }
                StageRole::Content => annotation.section(kind).trim().to_string(),
            }
        })
        .collect()
}

fn ensure_valid_annotation(sample: &CorpusSample) -> Result<(), EmitError> {
    let violations = validate_annotation(&sample.annotation, &sample.paper.introduction);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(EmitError::InvalidAnnotation {
            paper_id: sample.paper.paper_id.clone(),
            violations,
        })
    }
}

fn stig_instruction(granularity: Granularity) -> &'static str {
    match granularity {
        Granularity::EightStage => assets::STIG_INSTRUCTION_EIGHT,
        Granularity::FourStage => assets::STIG_INSTRUCTION_FOUR,
    }
}

/// Emits one staged-output record: the target is the rendered stage sequence
/// built from the annotation under `schema`.
pub fn emit_stig_record(
    sample: &CorpusSample,
    schema: &StageSchema,
) -> Result<TrainingRecord, EmitError> {
    ensure_valid_annotation(sample)?;
    let granularity = schema.granularity();
    let segments = stage_bodies(&sample.annotation, granularity)
        .into_iter()
        .enumerate()
        .map(|(k, body)| StageSegment::new(StageId::new(k as u8), body))
        .collect();
    let sequence = StagedSequence::new(schema.clone(), segments);
    let output = sequence.render().map_err(|source| EmitError::Unrenderable {
        paper_id: sample.paper.paper_id.clone(),
        source,
    })?;
    Ok(TrainingRecord {
        instruction: stig_instruction(granularity).trim_end().to_string(),
        input: build_input_prompt(&sample.core()),
        output,
        variant: match granularity {
            Granularity::EightStage => Variant::Stig8,
            Granularity::FourStage => Variant::Stig4,
        },
        paper_id: sample.paper.paper_id.clone(),
    })
}

fn stage_group_instruction(granularity: Granularity, stage: StageId) -> String {
    let kind = granularity.subsection_of(stage).expect("id in range");
    let template = match granularity.role_of(stage).expect("id in range") {
        StageRole::Outline => assets::STAGE_OUTLINE_INSTRUCTION,
        StageRole::Content => assets::STAGE_CONTENT_INSTRUCTION,
    };
    template.replace("{subsection}", kind.label()).trim_end().to_string()
}

/// Input text for stage `k` given the ground-truth bodies of stages `< k`:
/// the core-materials prompt plus a history section that is exactly the
/// newline-joined concatenation of the prior bodies.
pub fn stage_group_input(base_prompt: &str, prior_bodies: &[String]) -> String {
    if prior_bodies.is_empty() {
        base_prompt.to_string()
    } else {
        format!(
            "{base_prompt}\n\n{}\n{}",
            assets::STAGE_HISTORY_HEADER,
            prior_bodies.join("\n")
        )
    }
}

/// Emits the eight per-stage writing groups, teacher-forced: record `k`'s
/// input carries the ground-truth outputs of all stages before `k`, and its
/// output is stage `k`'s body alone, with no stage tokens.
pub fn emit_stage_writing_groups(sample: &CorpusSample) -> Result<Vec<TrainingRecord>, EmitError> {
    ensure_valid_annotation(sample)?;
    let granularity = Granularity::EightStage;
    let bodies = stage_bodies(&sample.annotation, granularity);
    let base_prompt = build_input_prompt(&sample.core());
    Ok((0..bodies.len())
        .map(|k| TrainingRecord {
            instruction: stage_group_instruction(granularity, StageId::new(k as u8)),
            input: stage_group_input(&base_prompt, &bodies[..k]),
            output: bodies[k].clone(),
            variant: Variant::StageGroup(k as u8),
            paper_id: sample.paper.paper_id.clone(),
        })
        .collect())
}

/// Emits the token-free ablation record: the four section texts joined by
/// blank lines, with empty sections omitted from the join.
pub fn emit_ft_plain_record(sample: &CorpusSample) -> Result<TrainingRecord, EmitError> {
    ensure_valid_annotation(sample)?;
    let output = SubsectionKind::ALL
        .iter()
        .map(|k| sample.annotation.section(*k).trim())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join("\n\n");
    Ok(TrainingRecord {
        instruction: assets::FT_PLAIN_INSTRUCTION.trim_end().to_string(),
        input: build_input_prompt(&sample.core()),
        output,
        variant: Variant::FtPlain,
        paper_id: sample.paper.paper_id.clone(),
    })
}

/// Variant families selectable on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum VariantSelection {
    Stig8,
    Stig4,
    FtPlain,
    StageGroups,
}

impl VariantSelection {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "stig8" => Some(VariantSelection::Stig8),
            "stig4" => Some(VariantSelection::Stig4),
            "ftplain" => Some(VariantSelection::FtPlain),
            "stagegroups" => Some(VariantSelection::StageGroups),
            _ => None,
        }
    }
}

/// Emits the selected variants for every train-split sample. Test-split
/// samples never contribute records; the count of skipped test samples is
/// returned alongside.
pub fn emit_all(
    samples: &[CorpusSample],
    selections: &[VariantSelection],
) -> Result<(Vec<TrainingRecord>, usize), EmitError> {
    let mut records = Vec::new();
    let mut skipped_test = 0usize;
    for sample in samples {
        if sample.split == Split::Test {
            skipped_test += 1;
            continue;
        }
        for selection in selections {
            match selection {
                VariantSelection::Stig8 => {
                    records.push(emit_stig_record(sample, &StageSchema::eight())?)
                }
                VariantSelection::Stig4 => {
                    records.push(emit_stig_record(sample, &StageSchema::four())?)
                }
                VariantSelection::FtPlain => records.push(emit_ft_plain_record(sample)?),
                VariantSelection::StageGroups => {
                    records.extend(emit_stage_writing_groups(sample)?)
                }
            }
        }
    }
    Ok((records, skipped_test))
}

/// The special-token literals a training framework must register, ordered as
/// (open, close) pairs ascending by stage id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokenRegistry {
    pub tokens: Vec<String>,
}

impl SpecialTokenRegistry {
    pub fn for_schema(schema: &StageSchema) -> Self {
        let tokens = schema
            .granularity()
            .stage_ids()
            .flat_map(|id| {
                let (open, close) = schema.token_pair(id).expect("id in range");
                [open, close]
            })
            .collect();
        SpecialTokenRegistry { tokens }
    }

    /// Union of the registries needed by the selected variants; staged
    /// variants contribute their schema's tokens, others contribute none.
    pub fn for_selections(selections: &[VariantSelection]) -> Self {
        let mut tokens: Vec<String> = Vec::new();
        let mut granularities: Vec<Granularity> = Vec::new();
        if selections.iter().any(|s| {
            matches!(s, VariantSelection::Stig8 | VariantSelection::StageGroups)
        }) {
            granularities.push(Granularity::EightStage);
        }
        if selections.contains(&VariantSelection::Stig4) {
            granularities.push(Granularity::FourStage);
        }
        // Eight-stage tokens subsume four-stage tokens under the default
        // templates; keep pair order ascending and deduplicate.
        granularities.sort_by_key(|g| std::cmp::Reverse(g.stage_count()));
        for granularity in granularities {
            for token in Self::for_schema(&StageSchema::for_granularity(granularity)).tokens {
                if !tokens.contains(&token) {
                    tokens.push(token);
                }
            }
        }
        SpecialTokenRegistry { tokens }
    }

    /// One literal per line, order-significant.
    pub fn to_file_string(&self) -> String {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        text
    }
}

/// Token estimate used for the context-budget check: one token per four
/// characters, rounded up. Mirrors the usual prose byte-per-token rate well
/// enough to flag records that would overflow the training context.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone)]
pub struct DatasetWriteOptions {
    /// Records whose instruction+input+output estimate exceeds this are
    /// flagged in the manifest, never truncated.
    pub token_budget: usize,
}

impl Default for DatasetWriteOptions {
    fn default() -> Self {
        DatasetWriteOptions { token_budget: 8192 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFile {
    pub variant: String,
    pub path: String,
    pub records: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRegistry {
    pub path: String,
    pub tokens: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverBudgetRecord {
    pub variant: String,
    pub paper_id: String,
    pub estimated_tokens: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub files: Vec<ManifestFile>,
    pub registry: ManifestRegistry,
    pub token_budget: usize,
    pub over_budget: Vec<OverBudgetRecord>,
}

#[derive(Debug, Error)]
pub enum WriteError {
    #[error("dataset io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn sha256_hex(data: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(data);
    format!("{:x}", hasher.finalize())
}

/// Writes one line-delimited file per variant, the token registry, and a
/// manifest with per-variant counts and per-file content hashes. Reruns on
/// identical inputs produce identical bytes.
pub fn write_dataset(
    records: &[TrainingRecord],
    registry: &SpecialTokenRegistry,
    out_dir: &Path,
    options: &DatasetWriteOptions,
) -> Result<DatasetManifest, WriteError> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| WriteError::Io {
            path: path.clone(),
            source,
        }
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut by_variant: BTreeMap<String, Vec<&TrainingRecord>> = BTreeMap::new();
    for record in records {
        by_variant
            .entry(record.variant.as_str())
            .or_default()
            .push(record);
    }

    let mut files = Vec::new();
    let mut over_budget = Vec::new();
    for (variant, records) in &by_variant {
        let mut content = String::new();
        for record in records {
            let estimate = estimate_tokens(&record.instruction)
                + estimate_tokens(&record.input)
                + estimate_tokens(&record.output);
            if estimate > options.token_budget {
                over_budget.push(OverBudgetRecord {
                    variant: variant.clone(),
                    paper_id: record.paper_id.clone(),
                    estimated_tokens: estimate,
                });
            }
            content.push_str(&serde_json::to_string(record).expect("records serialize"));
            content.push('\n');
        }
        let file_name = format!("{variant}.jsonl");
        let path: PathBuf = out_dir.join(&file_name);
        fs::write(&path, &content).map_err(io_err(&path))?;
        files.push(ManifestFile {
            variant: variant.clone(),
            path: file_name,
            records: records.len(),
            sha256: sha256_hex(content.as_bytes()),
        });
    }

    let registry_text = registry.to_file_string();
    let registry_path = out_dir.join("special_tokens.txt");
    fs::write(&registry_path, &registry_text).map_err(io_err(&registry_path))?;

    over_budget.sort_by(|a, b| a.variant.cmp(&b.variant).then(a.paper_id.cmp(&b.paper_id)));
    let manifest = DatasetManifest {
        files,
        registry: ManifestRegistry {
            path: "special_tokens.txt".into(),
            tokens: registry.tokens.len(),
            sha256: sha256_hex(registry_text.as_bytes()),
        },
        token_budget: options.token_budget,
        over_budget,
    };
    let manifest_path = out_dir.join("manifest.json");
    let manifest_json =
        serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let mut writer = BufWriter::new(fs::File::create(&manifest_path).map_err(io_err(&manifest_path))?);
    writer
        .write_all(manifest_json.as_bytes())
        .and_then(|_| writer.write_all(b"\n"))
        .map_err(io_err(&manifest_path))?;
    Ok(manifest)
}
