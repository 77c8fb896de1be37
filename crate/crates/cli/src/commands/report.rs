use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use serde::Serialize;
use stig_core::evaluation::{aggregate, read_reports, summary_table};

#[derive(Parser, Serialize)]
pub struct Args {
    /// Per-document report file (reports.jsonl) to re-aggregate.
    #[arg(long)]
    pub reports: PathBuf,
    /// Output directory for summary.tsv.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    super::write_config_snapshot(&args.out, &args)?;
    let reports = read_reports(&args.reports).context("reading reports")?;
    let summaries = aggregate(&reports).context("aggregating reports")?;
    let table = summary_table(&summaries);
    let path = args.out.join("summary.tsv");
    fs::write(&path, &table).with_context(|| format!("writing {}", path.display()))?;
    print!("{table}");
    println!("-> {}", path.display());
    Ok(())
}
