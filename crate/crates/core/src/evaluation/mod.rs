//! Five-dimension evaluation of generated introductions, per-document
//! reports, and corpus-level aggregation.

mod backends;
mod metrics;

pub use backends::{
    BackendClassifier, BagCosineScorer, ClassifyContext, ConstScorer, EmbeddingScorer,
    EvalBackendError, HeuristicClassifier, NgramF1Scorer, NllSeries, PerplexityModel,
    ScriptedPerplexity, SentenceClassifier, UniformPerplexity, UnigramPerplexity,
};
pub use metrics::{
    check_quotation_constraint, missing_coefficient, missing_subsections,
    score_content_coverage, score_narrative_quality, score_semantic_similarity,
    score_structural_rationality, GeneratedText, MetricError, NqOutcome, QcMatch, QcOutcome,
    SentenceLabel, SrOutcome, READABILITY_PPL_LINE,
};

// One splitting convention across the whole pipeline.
pub use crate::text::split_sentences;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusSample;
use crate::generation::WorkflowResult;

/// A metric value or an explicit reason it could not be computed; never a
/// silent zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricOutcome {
    Value { value: f64 },
    Undefined { reason: String },
}

impl MetricOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            MetricOutcome::Value { value } => Some(*value),
            MetricOutcome::Undefined { .. } => None,
        }
    }

    fn from_result(result: Result<f64, MetricError>) -> Self {
        match result {
            Ok(value) => MetricOutcome::Value { value },
            Err(err) => MetricOutcome::Undefined {
                reason: err.to_string(),
            },
        }
    }

    pub fn undefined(reason: impl Into<String>) -> Self {
        MetricOutcome::Undefined {
            reason: reason.into(),
        }
    }
}

/// Per-document evaluation report: the five metric outcomes plus
/// sentence-level labels and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub paper_id: String,
    pub method: String,
    pub ss: MetricOutcome,
    pub sr: MetricOutcome,
    pub cc: MetricOutcome,
    pub nq: MetricOutcome,
    pub qc: MetricOutcome,
    /// Identity of the scorer behind the semantic-similarity value.
    pub ss_scorer: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nq_above_readability_line: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nq_truncated: Option<bool>,
    pub qc_matches: Vec<QcMatch>,
    pub sentence_labels: Vec<SentenceLabel>,
    pub missing_subsections: usize,
}

/// The model-backed scoring surface evaluation runs against.
pub struct EvalBackends<'a> {
    /// Document-pair scorer for semantic similarity.
    pub ss_scorer: &'a dyn EmbeddingScorer,
    /// Sentence-against-section scorer for content coverage.
    pub embedder: &'a dyn EmbeddingScorer,
    pub classifier: &'a dyn SentenceClassifier,
    pub ppl_model: &'a dyn PerplexityModel,
}

/// A generated document under evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDocument {
    pub paper_id: String,
    pub method: String,
    pub introduction: String,
    /// Per-subsection content for workflows that produce it.
    pub sections: Option<BTreeMap<crate::stage::SubsectionKind, String>>,
}

impl GeneratedDocument {
    pub fn from_workflow_result(paper_id: &str, result: &WorkflowResult) -> Self {
        GeneratedDocument {
            paper_id: paper_id.to_string(),
            method: result.workflow.clone(),
            introduction: result.introduction.clone(),
            sections: result.sections.clone(),
        }
    }

    fn text(&self) -> GeneratedText {
        match &self.sections {
            Some(sections) if !sections.is_empty() => GeneratedText::Sectioned(sections.clone()),
            _ => GeneratedText::Plain(self.introduction.clone()),
        }
    }
}

/// Runs all five metrics over one document. Metric failures are isolated:
/// each impossible metric reports its reason while the others proceed.
pub fn evaluate_document(
    document: &GeneratedDocument,
    reference: &CorpusSample,
    backends: &EvalBackends<'_>,
) -> EvalReport {
    let mut report = EvalReport {
        paper_id: document.paper_id.clone(),
        method: document.method.clone(),
        ss: MetricOutcome::undefined("not computed"),
        sr: MetricOutcome::undefined("not computed"),
        cc: MetricOutcome::undefined("not computed"),
        nq: MetricOutcome::undefined("not computed"),
        qc: MetricOutcome::undefined("not computed"),
        ss_scorer: backends.ss_scorer.name().to_string(),
        nq_above_readability_line: None,
        nq_truncated: None,
        qc_matches: Vec::new(),
        sentence_labels: Vec::new(),
        missing_subsections: 0,
    };

    if document.introduction.trim().is_empty() {
        let reason = "empty generated text";
        report.ss = MetricOutcome::undefined(reason);
        report.sr = MetricOutcome::undefined(reason);
        report.cc = MetricOutcome::undefined(reason);
        report.nq = MetricOutcome::undefined(reason);
        report.qc = MetricOutcome::undefined(reason);
        return report;
    }

    report.ss = MetricOutcome::from_result(score_semantic_similarity(
        &document.introduction,
        &reference.paper.introduction,
        backends.ss_scorer,
    ));

    let generated = document.text();
    match score_structural_rationality(&generated, backends.classifier) {
        Ok(outcome) => {
            report.sr = MetricOutcome::Value { value: outcome.sr };
            report.missing_subsections = outcome.missing_subsections;
            report.cc = MetricOutcome::from_result(score_content_coverage(
                &outcome.labels,
                &reference.annotation,
                backends.embedder,
                outcome.missing_subsections,
            ));
            report.sentence_labels = outcome.labels;
        }
        Err(err) => {
            report.sr = MetricOutcome::undefined(err.to_string());
            report.cc =
                MetricOutcome::undefined("structural labels unavailable");
        }
    }

    match score_narrative_quality(&document.introduction, backends.ppl_model) {
        Ok(outcome) => {
            report.nq = MetricOutcome::Value { value: outcome.ppl };
            report.nq_above_readability_line = Some(outcome.above_readability_line);
            report.nq_truncated = Some(outcome.truncated);
        }
        Err(err) => report.nq = MetricOutcome::undefined(err.to_string()),
    }

    let qc = check_quotation_constraint(&document.introduction);
    report.qc = MetricOutcome::Value {
        value: if qc.qc { 1.0 } else { 0.0 },
    };
    report.qc_matches = qc.matches;

    report
}

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("no reports to aggregate")]
    Empty,
}

/// Per-method means over the defined metric values, plus the QC pass rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub documents: usize,
    pub ss: Option<f64>,
    pub sr: Option<f64>,
    pub cc: Option<f64>,
    pub nq: Option<f64>,
    pub qc_rate: Option<f64>,
}

fn mean_of(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Groups reports by method (rows ordered by method name) and averages each
/// metric over the documents where it was defined.
pub fn aggregate(reports: &[EvalReport]) -> Result<Vec<MethodSummary>, AggregateError> {
    if reports.is_empty() {
        return Err(AggregateError::Empty);
    }
    let mut by_method: BTreeMap<&str, Vec<&EvalReport>> = BTreeMap::new();
    for report in reports {
        by_method.entry(&report.method).or_default().push(report);
    }
    Ok(by_method
        .into_iter()
        .map(|(method, group)| {
            let collect = |pick: fn(&EvalReport) -> &MetricOutcome| -> Vec<f64> {
                group.iter().filter_map(|r| pick(r).value()).collect()
            };
            MethodSummary {
                method: method.to_string(),
                documents: group.len(),
                ss: mean_of(&collect(|r| &r.ss)),
                sr: mean_of(&collect(|r| &r.sr)),
                cc: mean_of(&collect(|r| &r.cc)),
                nq: mean_of(&collect(|r| &r.nq)),
                qc_rate: mean_of(&collect(|r| &r.qc)),
            }
        })
        .collect())
}

fn format_cell(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.4}"),
        None => "-".to_string(),
    }
}

/// Tab-separated summary table with the columns method, SS, SR, CC, NQ, QC.
pub fn summary_table(summaries: &[MethodSummary]) -> String {
    let mut out = String::from("method\tSS\tSR\tCC\tNQ\tQC\n");
    for s in summaries {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            s.method,
            format_cell(s.ss),
            format_cell(s.sr),
            format_cell(s.cc),
            format_cell(s.nq),
            format_cell(s.qc_rate),
        ));
    }
    out
}

#[derive(Debug, Error)]
pub enum ReportIoError {
    #[error("report io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("report line {line} malformed: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// One report per line, UTF-8 JSON.
pub fn write_reports(path: &Path, reports: &[EvalReport]) -> Result<(), ReportIoError> {
    let io_err = |source| ReportIoError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut file = fs::File::create(path).map_err(io_err)?;
    for report in reports {
        let line = serde_json::to_string(report).expect("reports serialize");
        writeln!(file, "{line}").map_err(io_err)?;
    }
    Ok(())
}

pub fn read_reports(path: &Path) -> Result<Vec<EvalReport>, ReportIoError> {
    let data = fs::read_to_string(path).map_err(|source| ReportIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reports = Vec::new();
    for (i, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        reports.push(serde_json::from_str(line).map_err(|source| ReportIoError::Malformed {
            line: i + 1,
            source,
        })?);
    }
    Ok(reports)
}
