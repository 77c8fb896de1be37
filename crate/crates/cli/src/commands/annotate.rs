use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use serde::Serialize;
use stig_core::corpus::{annotate_introduction, AnnotateError};

#[derive(Parser, Serialize)]
pub struct Args {
    /// Paper records to annotate: a .jsonl file or a directory.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for annotations.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    /// Annotator client: mock, live, or recorded:<path>.
    #[arg(long, default_value = "mock")]
    pub annotator: String,
}

#[derive(Serialize)]
struct AnnotationLine<'a> {
    paper_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    annotation: Option<stig_core::corpus::AnnotatedIntroduction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rejected: Option<String>,
}

pub fn run(args: Args) -> Result<()> {
    super::write_config_snapshot(&args.out, &args)?;
    let papers = super::read_paper_records(&args.input)?;
    let annotator = super::annotator_from_flag(&args.annotator)?;

    let mut lines = Vec::new();
    let mut accepted = 0usize;
    for paper in &papers {
        match annotate_introduction(&paper.introduction, annotator.as_ref()) {
            Ok(annotation) => {
                accepted += 1;
                lines.push(serde_json::to_string(&AnnotationLine {
                    paper_id: &paper.paper_id,
                    annotation: Some(annotation),
                    rejected: None,
                })?);
            }
            Err(err @ (AnnotateError::Format(_) | AnnotateError::Rejected { .. })) => {
                lines.push(serde_json::to_string(&AnnotationLine {
                    paper_id: &paper.paper_id,
                    annotation: None,
                    rejected: Some(err.to_string()),
                })?);
            }
            Err(err) => return Err(err).context("annotator client failed"),
        }
    }

    let path = args.out.join("annotations.jsonl");
    let mut content = lines.join("\n");
    if !content.is_empty() {
        content.push('\n');
    }
    std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    println!(
        "annotated {accepted} of {} introductions -> {}",
        papers.len(),
        path.display()
    );
    Ok(())
}
