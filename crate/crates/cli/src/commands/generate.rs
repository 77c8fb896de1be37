use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::Parser;
use rayon::prelude::*;
use serde::Serialize;
use stig_core::corpus::{read_corpus, CorpusSample, Split};
use stig_core::generation::{
    run_exists, write_run_artifacts, GenerateOptions, GenerationBackend, HttpCompletionBackend,
    MockBackend, ProcessBackend, Workflow,
};
use stig_core::stage::StageSchema;

#[derive(Parser, Serialize)]
pub struct Args {
    /// Corpus file whose test split drives generation.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Root output directory; runs land under <out>/<workflow>/<paper_id>/.
    #[arg(long)]
    pub out: PathBuf,
    /// Workflow to run.
    #[arg(long, value_parser = ["stig", "pure", "elaborate", "outline", "stage_writing"])]
    pub workflow: String,
    /// Backend: mock, http (endpoint from --endpoint or STIG_BACKEND_URL),
    /// or process (command line in --endpoint).
    #[arg(long, default_value = "mock")]
    pub backend: String,
    /// Endpoint URL for http or command line for process backends.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Stage granularity for the staged workflow: eight or four.
    #[arg(long, default_value = "eight", value_parser = ["eight", "four"])]
    pub schema: String,
    /// Concurrent samples; process backends are single-flight regardless.
    #[arg(long, default_value_t = 4)]
    pub jobs: usize,
    /// Seed forwarded to the backend for reproducible decoding.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Regenerate runs whose outputs already exist.
    #[arg(long, default_value_t = false)]
    pub force: bool,
    #[arg(long)]
    pub max_new_tokens: Option<u32>,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
}

fn backend_from_flags(args: &Args) -> Result<Arc<dyn GenerationBackend>> {
    match args.backend.as_str() {
        "mock" => Ok(Arc::new(MockBackend::with_seed(args.seed.unwrap_or(0)))),
        "http" => {
            let endpoint = match &args.endpoint {
                Some(endpoint) => endpoint.clone(),
                None => std::env::var("STIG_BACKEND_URL").context(
                    "STIG_BACKEND_URL is not set; pass --endpoint or export the variable",
                )?,
            };
            Ok(Arc::new(HttpCompletionBackend::new(endpoint)))
        }
        "process" => {
            let command = args
                .endpoint
                .as_ref()
                .context("--backend process needs the command line in --endpoint")?;
            Ok(Arc::new(ProcessBackend::spawn(command)?))
        }
        other => bail!("unknown backend {other:?}; expected mock, http, or process"),
    }
}

pub fn run(args: Args) -> Result<()> {
    let workflow = Workflow::from_str_name(&args.workflow).expect("clap validated the name");
    let schema = match args.schema.as_str() {
        "four" => StageSchema::four(),
        _ => StageSchema::eight(),
    };
    let out_dir = args.out.join(workflow.as_str());
    super::write_config_snapshot(&out_dir, &args)?;

    let samples = read_corpus(&args.corpus).context("reading corpus")?;
    let test_samples: Vec<&CorpusSample> = samples
        .iter()
        .filter(|s| s.split == Split::Test)
        .collect();
    if test_samples.is_empty() {
        eprintln!("warning: corpus has no test-split samples; nothing to generate");
    }

    let backend = backend_from_flags(&args)?;
    let options = GenerateOptions {
        max_new_tokens: args.max_new_tokens,
        temperature: args.temperature,
        stop_literals: Vec::new(),
        seed: args.seed,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .context("building worker pool")?;
    let outcomes: Vec<Result<bool>> = pool.install(|| {
        test_samples
            .par_iter()
            .map(|sample| {
                let paper_id = &sample.paper.paper_id;
                let run_dir = out_dir.join(paper_id);
                if !args.force && run_exists(&run_dir) {
                    println!("[{paper_id}] {} skipped (exists)", workflow.as_str());
                    return Ok(false);
                }
                let result = workflow
                    .run(&sample.core(), backend.as_ref(), &schema, &options)
                    .with_context(|| format!("[{paper_id}] workflow failed"))?;
                write_run_artifacts(&run_dir, &result)
                    .with_context(|| format!("[{paper_id}] writing run artifacts"))?;
                println!(
                    "[{paper_id}] {} generated ({} calls, {} total tokens)",
                    workflow.as_str(),
                    result.ledger.calls.len(),
                    result.ledger.total_tokens()
                );
                Ok(true)
            })
            .collect()
    });

    let mut generated = 0usize;
    let mut skipped = 0usize;
    for outcome in outcomes {
        if outcome? {
            generated += 1;
        } else {
            skipped += 1;
        }
    }
    println!(
        "{}: {generated} generated, {skipped} skipped -> {}",
        workflow.as_str(),
        out_dir.display()
    );
    Ok(())
}
