use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use serde::Serialize;
use stig_core::corpus::read_corpus;
use stig_core::dataset::{
    emit_all, write_dataset, DatasetWriteOptions, SpecialTokenRegistry, VariantSelection,
};

fn parse_variant(name: &str) -> Result<VariantSelection, String> {
    VariantSelection::parse(name)
        .ok_or_else(|| format!("unknown variant {name:?}; expected stig8, stig4, ftplain, or stagegroups"))
}

#[derive(Parser, Serialize)]
pub struct Args {
    /// Corpus file produced by build-corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory for dataset files, registry, and manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Variants to emit; defaults to the staged variant of --schema.
    #[arg(long, value_delimiter = ',', value_parser = parse_variant, num_args = 0..)]
    #[serde(skip)]
    pub variants: Vec<VariantSelection>,
    /// Stage granularity choosing the default variant: eight or four.
    #[arg(long, default_value = "eight", value_parser = ["eight", "four"])]
    pub schema: String,
    /// Context-budget estimate above which records are flagged.
    #[arg(long, default_value_t = 8192)]
    pub token_budget: usize,
}

#[derive(Serialize)]
struct Snapshot<'a> {
    corpus: &'a PathBuf,
    out: &'a PathBuf,
    variants: Vec<String>,
    schema: &'a str,
    token_budget: usize,
}

pub fn run(args: Args) -> Result<()> {
    let selections = if args.variants.is_empty() {
        match args.schema.as_str() {
            "four" => vec![VariantSelection::Stig4],
            _ => vec![VariantSelection::Stig8],
        }
    } else {
        let mut v = args.variants.clone();
        v.sort();
        v.dedup();
        v
    };
    super::write_config_snapshot(
        &args.out,
        &Snapshot {
            corpus: &args.corpus,
            out: &args.out,
            variants: selections.iter().map(|s| format!("{s:?}")).collect(),
            schema: &args.schema,
            token_budget: args.token_budget,
        },
    )?;

    let samples = read_corpus(&args.corpus).context("reading corpus")?;
    let (records, skipped_test) = emit_all(&samples, &selections)?;
    let registry = SpecialTokenRegistry::for_selections(&selections);
    let manifest = write_dataset(
        &records,
        &registry,
        &args.out,
        &DatasetWriteOptions {
            token_budget: args.token_budget,
        },
    )
    .context("writing dataset")?;

    for file in &manifest.files {
        println!("{}: {} records -> {}", file.variant, file.records, file.path);
    }
    println!(
        "registry: {} tokens -> {} ({} test samples excluded, {} over budget)",
        manifest.registry.tokens,
        manifest.registry.path,
        skipped_test,
        manifest.over_budget.len()
    );
    Ok(())
}
