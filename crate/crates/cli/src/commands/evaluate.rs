use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Parser;
use rayon::prelude::*;
use serde::Serialize;
use stig_core::corpus::{read_corpus, CorpusSample};
use stig_core::evaluation::{
    aggregate, evaluate_document, summary_table, write_reports, BagCosineScorer, ConstScorer,
    EmbeddingScorer, EvalBackends, EvalReport, GeneratedDocument, HeuristicClassifier,
    MetricOutcome, NgramF1Scorer, PerplexityModel, SentenceClassifier, UnigramPerplexity,
    UniformPerplexity,
};
use stig_core::generation::read_run_result;

#[derive(Parser, Serialize)]
pub struct Args {
    /// Root of generation runs: <runs>/<method>/<paper_id>/.
    #[arg(long)]
    pub runs: PathBuf,
    /// Corpus file carrying the reference annotations.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory for reports.jsonl and summary.tsv.
    #[arg(long)]
    pub out: PathBuf,
    /// Sentence classifier: heuristic (deterministic cues + position).
    #[arg(long, default_value = "heuristic", value_parser = ["heuristic"])]
    pub classifier: String,
    /// Document-pair scorer: ngram-f1 or const:<value>.
    #[arg(long, default_value = "ngram-f1")]
    pub ss_scorer: String,
    /// Sentence-against-section scorer: bag-cosine or const:<value>.
    #[arg(long, default_value = "bag-cosine")]
    pub embedder: String,
    /// Perplexity model: unigram (fitted per reference) or uniform:<vocab>.
    #[arg(long, default_value = "unigram")]
    pub ppl: String,
    #[arg(long, default_value_t = 4)]
    pub jobs: usize,
}

fn scorer_from_flag(selector: &str) -> Result<Box<dyn EmbeddingScorer>> {
    if let Some(value) = selector.strip_prefix("const:") {
        return Ok(Box::new(ConstScorer(value.parse()?)));
    }
    match selector {
        "ngram-f1" => Ok(Box::new(NgramF1Scorer)),
        "bag-cosine" => Ok(Box::new(BagCosineScorer)),
        other => bail!("unknown scorer {other:?}; expected ngram-f1, bag-cosine, or const:<value>"),
    }
}

/// Discovers run directories as <runs>/<method>/<paper_id>/, both levels
/// sorted for determinism.
fn discover_runs(runs: &Path) -> Result<Vec<(String, String, PathBuf)>> {
    let mut found = Vec::new();
    let mut methods: Vec<PathBuf> = fs::read_dir(runs)
        .with_context(|| format!("reading runs directory {}", runs.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    methods.sort();
    for method_dir in methods {
        let method = method_dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        let mut run_dirs: Vec<PathBuf> = fs::read_dir(&method_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        run_dirs.sort();
        for run_dir in run_dirs {
            let paper_id = run_dir
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            if run_dir.join("result.json").is_file() {
                found.push((method.clone(), paper_id, run_dir));
            }
        }
    }
    Ok(found)
}

fn null_report(paper_id: &str, method: &str, reason: &str, scorer: &str) -> EvalReport {
    EvalReport {
        paper_id: paper_id.to_string(),
        method: method.to_string(),
        ss: MetricOutcome::undefined(reason),
        sr: MetricOutcome::undefined(reason),
        cc: MetricOutcome::undefined(reason),
        nq: MetricOutcome::undefined(reason),
        qc: MetricOutcome::undefined(reason),
        ss_scorer: scorer.to_string(),
        nq_above_readability_line: None,
        nq_truncated: None,
        qc_matches: Vec::new(),
        sentence_labels: Vec::new(),
        missing_subsections: 0,
    }
}

pub fn run(args: Args) -> Result<()> {
    super::write_config_snapshot(&args.out, &args)?;
    let samples = read_corpus(&args.corpus).context("reading corpus")?;
    let by_id: BTreeMap<&str, &CorpusSample> = samples
        .iter()
        .map(|s| (s.paper.paper_id.as_str(), s))
        .collect();

    let ss_scorer = scorer_from_flag(&args.ss_scorer)?;
    let embedder = scorer_from_flag(&args.embedder)?;
    let classifier: Box<dyn SentenceClassifier> = Box::new(HeuristicClassifier);
    let uniform_vocab: Option<u64> = args
        .ppl
        .strip_prefix("uniform:")
        .map(|v| v.parse())
        .transpose()?;
    if uniform_vocab.is_none() && args.ppl != "unigram" {
        bail!("unknown ppl model {:?}; expected unigram or uniform:<vocab>", args.ppl);
    }

    let runs = discover_runs(&args.runs)?;
    if runs.is_empty() {
        eprintln!("warning: no runs found under {}", args.runs.display());
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .context("building worker pool")?;
    let reports: Vec<EvalReport> = pool.install(|| {
        runs.par_iter()
            .map(|(method, paper_id, run_dir)| {
                let result = match read_run_result(run_dir) {
                    Ok(result) => result,
                    Err(err) => {
                        return null_report(
                            paper_id,
                            method,
                            &format!("unreadable run artifacts: {err}"),
                            ss_scorer.name(),
                        )
                    }
                };
                let Some(reference) = by_id.get(paper_id.as_str()) else {
                    return null_report(
                        paper_id,
                        method,
                        "no reference annotation in corpus",
                        ss_scorer.name(),
                    );
                };
                let document = GeneratedDocument::from_workflow_result(paper_id, &result);
                // The unigram model is fitted per document on its reference
                // introduction; the uniform model is shared.
                let ppl_model: Box<dyn PerplexityModel> = match uniform_vocab {
                    Some(vocab_size) => Box::new(UniformPerplexity { vocab_size }),
                    None => Box::new(UnigramPerplexity::fit(&reference.paper.introduction)),
                };
                let backends = EvalBackends {
                    ss_scorer: ss_scorer.as_ref(),
                    embedder: embedder.as_ref(),
                    classifier: classifier.as_ref(),
                    ppl_model: ppl_model.as_ref(),
                };
                evaluate_document(&document, reference, &backends)
            })
            .collect()
    });

    let reports_path = args.out.join("reports.jsonl");
    write_reports(&reports_path, &reports).context("writing reports")?;
    if !reports.is_empty() {
        let summaries = aggregate(&reports)?;
        let table = summary_table(&summaries);
        let summary_path = args.out.join("summary.tsv");
        fs::write(&summary_path, &table)
            .with_context(|| format!("writing {}", summary_path.display()))?;
        print!("{table}");
    }
    println!("{} reports -> {}", reports.len(), reports_path.display());
    Ok(())
}
