//! Corpus construction from structured paper records.
//!
//! Ingests one record per paper (already parsed out of the PDF by an
//! external structuring tool), extracts the core input materials, resolves
//! baseline-reference abstracts through a metadata lookup client, and
//! produces stage-annotated samples through an annotator client.

mod annotate;
mod build;
mod citations;
mod resolve;

pub use annotate::{
    annotate_introduction, annotation_prompt, parse_annotation_reply, point_bounds,
    validate_annotation, AnnotateError, AnnotationViolation, AnnotationViolationCode,
    AnnotatorClient, HttpAnnotatorClient, MockAnnotatorClient, RecordedAnnotatorClient,
    ScriptedAnnotatorClient,
};
pub use build::{
    build_corpus, read_corpus, write_corpus, BuildConfig, BuildError, BuildReport, RejectedSample,
};
pub use citations::extract_citation_keys;
pub use resolve::{
    resolve_reference_abstracts, HttpMetadataClient, LookupError, MetadataLookupClient,
    MockMetadataClient, PaperMetadata, RecordedMetadataClient, ResolveConfig, ResolveError,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stage::SubsectionKind;

/// A structured paper record as ingested (one JSON object per line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub paper_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub introduction: String,
    #[serde(default)]
    pub figures: Vec<String>,
    #[serde(default)]
    pub tables: Vec<TableMaterial>,
    #[serde(default, rename = "references")]
    pub reference_entries: Vec<ReferenceEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment_text: Option<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum PaperRecordError {
    #[error("paper {paper_id}: field {field} is empty")]
    EmptyField {
        paper_id: String,
        field: &'static str,
    },
}

impl PaperRecord {
    pub fn validate(&self) -> Result<(), PaperRecordError> {
        for (field, value) in [
            ("paper_id", &self.paper_id),
            ("title", &self.title),
            ("abstract", &self.abstract_text),
            ("introduction", &self.introduction),
        ] {
            if value.trim().is_empty() {
                return Err(PaperRecordError::EmptyField {
                    paper_id: self.paper_id.clone(),
                    field,
                });
            }
        }
        Ok(())
    }
}

/// A table's caption/description plus its cell text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableMaterial {
    pub description: String,
    pub content: String,
}

/// One entry of the paper's own reference list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub key: String,
    pub title: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionStatus {
    Resolved,
    NotFound,
    Ambiguous,
}

/// A baseline reference cited from the experiment sections, with the abstract
/// obtained from the metadata lookup when resolution succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReference {
    pub citation_key: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub resolution_status: ResolutionStatus,
}

/// The model input tuple: title, abstract, figure descriptions, table
/// materials, and resolved baseline-reference abstracts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreMaterials {
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub figure_descriptions: Vec<String>,
    pub table_materials: Vec<TableMaterial>,
    pub baseline_abstracts: Vec<BaselineReference>,
}

/// Pure projection of a paper record plus its resolved references into the
/// core-materials tuple. Figure and table lists keep document order; only
/// resolved references are included. Returns a warning line when references
/// were present but none resolved.
pub fn extract_core_materials(
    paper: &PaperRecord,
    refs: &[BaselineReference],
) -> (CoreMaterials, Vec<String>) {
    let resolved: Vec<BaselineReference> = refs
        .iter()
        .filter(|r| r.resolution_status == ResolutionStatus::Resolved)
        .cloned()
        .collect();
    let mut warnings = Vec::new();
    if resolved.is_empty() && !refs.is_empty() {
        warnings.push(format!(
            "paper {}: none of the {} cited baseline references resolved to an abstract",
            paper.paper_id,
            refs.len()
        ));
    }
    (
        CoreMaterials {
            title: paper.title.clone(),
            abstract_text: paper.abstract_text.clone(),
            figure_descriptions: paper.figures.clone(),
            table_materials: paper.tables.clone(),
            baseline_abstracts: resolved,
        },
        warnings,
    )
}

/// Four subsection texts plus per-subsection outline point lists, as produced
/// by the annotation protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedIntroduction {
    pub sections: BTreeMap<SubsectionKind, String>,
    pub outline: BTreeMap<SubsectionKind, Vec<String>>,
}

impl AnnotatedIntroduction {
    pub fn section(&self, kind: SubsectionKind) -> &str {
        self.sections.get(&kind).map(String::as_str).unwrap_or("")
    }

    pub fn points(&self, kind: SubsectionKind) -> &[String] {
        self.outline.get(&kind).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One corpus sample: the source paper, the reference resolutions (all
/// statuses, for provenance), the accepted annotation, and the split.
///
/// Serialized as one line-delimited record with exactly the fields
/// `paper_id, title, abstract, introduction, figures, tables, references,
/// sections, outline, split`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "SampleRepr", into = "SampleRepr")]
pub struct CorpusSample {
    pub paper: PaperRecord,
    pub references: Vec<BaselineReference>,
    pub annotation: AnnotatedIntroduction,
    pub split: Split,
}

impl CorpusSample {
    /// The core-materials projection (resolved references only).
    pub fn core(&self) -> CoreMaterials {
        extract_core_materials(&self.paper, &self.references).0
    }
}

/// Wire format of one corpus line.
#[derive(Serialize, Deserialize)]
struct SampleRepr {
    paper_id: String,
    title: String,
    #[serde(rename = "abstract")]
    abstract_text: String,
    introduction: String,
    figures: Vec<String>,
    tables: Vec<TableMaterial>,
    references: Vec<BaselineReference>,
    sections: BTreeMap<SubsectionKind, String>,
    outline: BTreeMap<SubsectionKind, Vec<String>>,
    split: Split,
}

impl From<CorpusSample> for SampleRepr {
    fn from(sample: CorpusSample) -> Self {
        SampleRepr {
            paper_id: sample.paper.paper_id,
            title: sample.paper.title,
            abstract_text: sample.paper.abstract_text,
            introduction: sample.paper.introduction,
            figures: sample.paper.figures,
            tables: sample.paper.tables,
            references: sample.references,
            sections: sample.annotation.sections,
            outline: sample.annotation.outline,
            split: sample.split,
        }
    }
}

impl From<SampleRepr> for CorpusSample {
    fn from(repr: SampleRepr) -> Self {
        let reference_entries = repr
            .references
            .iter()
            .map(|r| ReferenceEntry {
                key: r.citation_key.clone(),
                title: r.title.clone(),
            })
            .collect();
        CorpusSample {
            paper: PaperRecord {
                paper_id: repr.paper_id,
                title: repr.title,
                abstract_text: repr.abstract_text,
                introduction: repr.introduction,
                figures: repr.figures,
                tables: repr.tables,
                reference_entries,
                experiment_text: None,
            },
            references: repr.references,
            annotation: AnnotatedIntroduction {
                sections: repr.sections,
                outline: repr.outline,
            },
            split: repr.split,
        }
    }
}
