//! Subcommand implementations and shared plumbing.

pub mod annotate;
pub mod build_corpus;
pub mod emit_dataset;
pub mod evaluate;
pub mod generate;
pub mod ledger;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use stig_core::corpus::{
    AnnotatorClient, HttpAnnotatorClient, HttpMetadataClient, MetadataLookupClient,
    MockAnnotatorClient, MockMetadataClient, PaperRecord, RecordedAnnotatorClient,
    RecordedMetadataClient,
};

/// Every command drops a resolved-config snapshot beside its outputs so a
/// run directory is self-describing.
pub fn write_config_snapshot<T: serde::Serialize>(out_dir: &Path, config: &T) -> Result<()> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let path = out_dir.join("config.json");
    let json = serde_json::to_string_pretty(config)?;
    fs::write(&path, format!("{json}\n"))
        .with_context(|| format!("writing config snapshot {}", path.display()))?;
    Ok(())
}

/// Reads paper records from a .jsonl file or from every *.jsonl under a
/// directory (sorted for determinism).
pub fn read_paper_records(input: &Path) -> Result<Vec<PaperRecord>> {
    let mut files: Vec<PathBuf> = Vec::new();
    if input.is_dir() {
        for entry in fs::read_dir(input)
            .with_context(|| format!("reading input directory {}", input.display()))?
        {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "jsonl") {
                files.push(path);
            }
        }
        files.sort();
    } else {
        files.push(input.to_path_buf());
    }

    let mut papers = Vec::new();
    for file in files {
        let data = fs::read_to_string(&file)
            .with_context(|| format!("reading paper records {}", file.display()))?;
        for (i, line) in data.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let paper: PaperRecord = serde_json::from_str(line)
                .with_context(|| format!("{}:{} is not a paper record", file.display(), i + 1))?;
            papers.push(paper);
        }
    }
    Ok(papers)
}

fn env_var(name: &str) -> Result<String> {
    std::env::var(name).with_context(|| format!("{name} is not set; export it to use the live client"))
}

/// Builds an annotator client from its CLI selector:
/// `mock`, `live`, or `recorded:<path>`.
pub fn annotator_from_flag(selector: &str) -> Result<Box<dyn AnnotatorClient>> {
    if let Some(path) = selector.strip_prefix("recorded:") {
        return Ok(Box::new(
            RecordedAnnotatorClient::from_jsonl_file(Path::new(path))
                .with_context(|| format!("loading recorded annotator replies from {path}"))?,
        ));
    }
    match selector {
        "mock" => Ok(Box::new(MockAnnotatorClient)),
        "live" => {
            let api_key = env_var("STIG_ANNOTATOR_API_KEY")?;
            let endpoint = std::env::var("STIG_ANNOTATOR_URL")
                .unwrap_or_else(|_| HttpAnnotatorClient::DEFAULT_ENDPOINT.to_string());
            let model = std::env::var("STIG_ANNOTATOR_MODEL")
                .unwrap_or_else(|_| HttpAnnotatorClient::DEFAULT_MODEL.to_string());
            Ok(Box::new(HttpAnnotatorClient::new(endpoint, api_key, model)))
        }
        other => bail!("unknown annotator {other:?}; expected mock, live, or recorded:<path>"),
    }
}

/// Builds a metadata lookup client from its CLI selector:
/// `mock`, `live`, or `recorded:<path>`.
pub fn metadata_from_flag(selector: &str) -> Result<Box<dyn MetadataLookupClient>> {
    if let Some(path) = selector.strip_prefix("recorded:") {
        return Ok(Box::new(
            RecordedMetadataClient::from_json_file(Path::new(path))
                .with_context(|| format!("loading recorded metadata from {path}"))?,
        ));
    }
    match selector {
        "mock" => Ok(Box::new(MockMetadataClient)),
        "live" => {
            let endpoint = std::env::var("STIG_METADATA_URL")
                .unwrap_or_else(|_| HttpMetadataClient::DEFAULT_ENDPOINT.to_string());
            let api_key = std::env::var("STIG_METADATA_API_KEY").ok();
            Ok(Box::new(HttpMetadataClient::new(endpoint, api_key)))
        }
        other => bail!("unknown metadata client {other:?}; expected mock, live, or recorded:<path>"),
    }
}
