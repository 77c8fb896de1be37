//! Corpus build: per-paper processing with bounded parallelism, isolated
//! failures, and deterministic output ordering.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::annotate::{annotate_introduction, AnnotateError, AnnotatorClient};
use super::citations::extract_citation_keys;
use super::resolve::{resolve_reference_abstracts, MetadataLookupClient, ResolveConfig};
use super::{extract_core_materials, CorpusSample, PaperRecord, Split};

#[derive(Debug, Clone)]
pub struct BuildConfig {
    /// Upper bound on concurrent per-paper work units.
    pub jobs: usize,
    /// Paper ids assigned to the test split; all others are train.
    pub test_ids: BTreeSet<String>,
    pub resolve: ResolveConfig,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            jobs: 4,
            test_ids: BTreeSet::new(),
            resolve: ResolveConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectedSample {
    pub paper_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BuildReport {
    pub succeeded: usize,
    pub annotation_rejected: usize,
    pub resolution_failed: usize,
    pub invalid_records: usize,
    pub warnings: Vec<String>,
    pub rejected: Vec<RejectedSample>,
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("corpus io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus line {line} is not a valid sample: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

enum PaperOutcome {
    Sample(Box<CorpusSample>, Vec<String>, bool),
    Rejected(RejectedSample),
    Invalid(RejectedSample),
}

/// Processes every paper, isolating per-paper failures, and returns the
/// accepted samples sorted by `paper_id` together with the build report.
/// Output is byte-identical across runs given identical inputs and
/// deterministic clients.
pub fn build_corpus(
    papers: &[PaperRecord],
    annotator: &dyn AnnotatorClient,
    metadata: &dyn MetadataLookupClient,
    config: &BuildConfig,
) -> (Vec<CorpusSample>, BuildReport) {
    let mut report = BuildReport::default();

    // Duplicate ids would make output ordering ambiguous; keep the first.
    let mut seen = BTreeSet::new();
    let mut unique: Vec<&PaperRecord> = Vec::with_capacity(papers.len());
    for paper in papers {
        if seen.insert(paper.paper_id.as_str()) {
            unique.push(paper);
        } else {
            report
                .warnings
                .push(format!("duplicate paper_id {:?} skipped", paper.paper_id));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.max(1))
        .build()
        .expect("thread pool construction");
    let outcomes: Vec<PaperOutcome> = pool.install(|| {
        unique
            .par_iter()
            .map(|paper| process_paper(paper, annotator, metadata, config))
            .collect()
    });

    let mut samples = Vec::new();
    for outcome in outcomes {
        match outcome {
            PaperOutcome::Sample(sample, warnings, resolution_failed) => {
                report.warnings.extend(warnings);
                if resolution_failed {
                    report.resolution_failed += 1;
                }
                samples.push(*sample);
            }
            PaperOutcome::Rejected(rejected) => {
                report.annotation_rejected += 1;
                report.rejected.push(rejected);
            }
            PaperOutcome::Invalid(rejected) => {
                report.invalid_records += 1;
                report.rejected.push(rejected);
            }
        }
    }

    samples.sort_by(|a, b| a.paper.paper_id.cmp(&b.paper.paper_id));
    report.rejected.sort_by(|a, b| a.paper_id.cmp(&b.paper_id));
    report.warnings.sort();
    report.succeeded = samples.len();
    (samples, report)
}

fn process_paper(
    paper: &PaperRecord,
    annotator: &dyn AnnotatorClient,
    metadata: &dyn MetadataLookupClient,
    config: &BuildConfig,
) -> PaperOutcome {
    if let Err(err) = paper.validate() {
        return PaperOutcome::Invalid(RejectedSample {
            paper_id: paper.paper_id.clone(),
            reason: err.to_string(),
        });
    }

    let mut warnings = Vec::new();
    let mut resolution_failed = false;
    let keys = extract_citation_keys(paper.experiment_text.as_deref().unwrap_or(""));
    let references =
        match resolve_reference_abstracts(&keys, &paper.reference_entries, metadata, &config.resolve)
        {
            Ok(refs) => refs,
            Err(err) => {
                warnings.push(format!("paper {}: {err}", paper.paper_id));
                resolution_failed = true;
                err.partial
            }
        };

    let (_, core_warnings) = extract_core_materials(paper, &references);
    warnings.extend(core_warnings);

    match annotate_introduction(&paper.introduction, annotator) {
        Ok(annotation) => {
            let split = if config.test_ids.contains(&paper.paper_id) {
                Split::Test
            } else {
                Split::Train
            };
            PaperOutcome::Sample(
                Box::new(CorpusSample {
                    paper: paper.clone(),
                    references,
                    annotation,
                    split,
                }),
                warnings,
                resolution_failed,
            )
        }
        Err(err @ (AnnotateError::Format(_) | AnnotateError::Rejected { .. })) => {
            PaperOutcome::Rejected(RejectedSample {
                paper_id: paper.paper_id.clone(),
                reason: err.to_string(),
            })
        }
        Err(err) => PaperOutcome::Rejected(RejectedSample {
            paper_id: paper.paper_id.clone(),
            reason: format!("annotator unavailable: {err}"),
        }),
    }
}

/// Writes one sample per line, UTF-8 JSON.
pub fn write_corpus(path: &Path, samples: &[CorpusSample]) -> Result<(), BuildError> {
    let io_err = |source| BuildError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let file = fs::File::create(path).map_err(io_err)?;
    let mut writer = BufWriter::new(file);
    for sample in samples {
        let line = serde_json::to_string(sample).expect("samples serialize");
        writeln!(writer, "{line}").map_err(io_err)?;
    }
    writer.flush().map_err(io_err)
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusSample>, BuildError> {
    let data = fs::read_to_string(path).map_err(|source| BuildError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut samples = Vec::new();
    for (i, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sample: CorpusSample =
            serde_json::from_str(line).map_err(|source| BuildError::Malformed {
                line: i + 1,
                source,
            })?;
        samples.push(sample);
    }
    Ok(samples)
}
