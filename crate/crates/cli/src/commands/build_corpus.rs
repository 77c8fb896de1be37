use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Parser;
use serde::Serialize;
use stig_core::corpus::{build_corpus, write_corpus, BuildConfig, ResolveConfig};

#[derive(Parser, Serialize)]
pub struct Args {
    /// Paper records: a .jsonl file or a directory of .jsonl files.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for corpus.jsonl and build_report.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Annotator client: mock, live, or recorded:<path>.
    #[arg(long, default_value = "mock")]
    pub annotator: String,
    /// Metadata lookup client: mock, live, or recorded:<path>.
    #[arg(long, default_value = "mock")]
    pub metadata: String,
    /// Concurrent per-paper work units.
    #[arg(long, default_value_t = 4)]
    pub jobs: usize,
    /// Comma-separated paper ids assigned to the test split.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub test_ids: Vec<String>,
    /// Retries for transient metadata lookup failures.
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    /// Backoff between lookup retries, in milliseconds.
    #[arg(long, default_value_t = 500)]
    pub backoff_ms: u64,
}

pub fn run(args: Args) -> Result<()> {
    super::write_config_snapshot(&args.out, &args)?;
    let papers = super::read_paper_records(&args.input)?;
    if papers.is_empty() {
        eprintln!(
            "warning: no paper records found under {}",
            args.input.display()
        );
    }
    let annotator = super::annotator_from_flag(&args.annotator)?;
    let metadata = super::metadata_from_flag(&args.metadata)?;
    let config = BuildConfig {
        jobs: args.jobs,
        test_ids: BTreeSet::from_iter(args.test_ids.iter().cloned()),
        resolve: ResolveConfig {
            max_retries: args.retries,
            backoff: Duration::from_millis(args.backoff_ms),
        },
    };

    let (samples, report) = build_corpus(&papers, annotator.as_ref(), metadata.as_ref(), &config);
    let corpus_path = args.out.join("corpus.jsonl");
    write_corpus(&corpus_path, &samples).context("writing corpus")?;
    let report_path = args.out.join("build_report.json");
    std::fs::write(
        &report_path,
        format!("{}\n", serde_json::to_string_pretty(&report)?),
    )
    .with_context(|| format!("writing {}", report_path.display()))?;

    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "built {} samples ({} annotation-rejected, {} resolution-failed, {} invalid) -> {}",
        report.succeeded,
        report.annotation_rejected,
        report.resolution_failed,
        report.invalid_records,
        corpus_path.display()
    );
    Ok(())
}
