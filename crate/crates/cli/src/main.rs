//! Command-line pipeline: corpus building, dataset emission, generation
//! runs, evaluation, and token-ledger reporting.

mod commands;
mod svg;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "stig",
    version,
    about = "Stage-token introduction generation pipeline",
    after_help = "Credentials and endpoints come from the environment:\n  \
        STIG_ANNOTATOR_API_KEY   API key for the live annotator (required with --annotator live)\n  \
        STIG_ANNOTATOR_URL       chat-completions endpoint (default: OpenAI)\n  \
        STIG_ANNOTATOR_MODEL    annotator model name (default: gpt-4o)\n  \
        STIG_METADATA_API_KEY   metadata lookup API key (optional)\n  \
        STIG_METADATA_URL       metadata search endpoint (default: Semantic Scholar)\n  \
        STIG_BACKEND_URL        completion endpoint for --backend http\n\
        Credentials are never written into corpus or run files."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a stage-annotated corpus from structured paper records.
    BuildCorpus(commands::build_corpus::Args),
    /// Annotate introductions without building a full corpus.
    Annotate(commands::annotate::Args),
    /// Emit instruction-tuning dataset files and the special-token registry.
    EmitDataset(commands::emit_dataset::Args),
    /// Run a generation workflow over the corpus test split.
    Generate(commands::generate::Args),
    /// Score generation runs on the five evaluation dimensions.
    Evaluate(commands::evaluate::Args),
    /// Aggregate per-run token ledgers into an efficiency table and chart.
    Ledger(commands::ledger::Args),
    /// Re-aggregate per-document report files into a summary table.
    Report(commands::report::Args),
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::BuildCorpus(args) => commands::build_corpus::run(args),
        Command::Annotate(args) => commands::annotate::run(args),
        Command::EmitDataset(args) => commands::emit_dataset::run(args),
        Command::Generate(args) => commands::generate::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Ledger(args) => commands::ledger::run(args),
        Command::Report(args) => commands::report::run(args),
    }
}
