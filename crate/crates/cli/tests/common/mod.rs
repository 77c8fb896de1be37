//! Shared fixtures and process helpers for the CLI test suites.

use std::path::Path;
use std::process::{Command, Output};

use stig_core::corpus::{PaperRecord, ReferenceEntry, TableMaterial};

pub fn fixture_paper(i: usize) -> PaperRecord {
    let topics = [
        "sparse retrieval",
        "graph pruning",
        "label routing",
        "query caching",
        "text chunking",
        "index sharding",
        "span scoring",
        "table grounding",
        "cite matching",
        "draft ranking",
    ];
    let topic = topics[i % topics.len()];
    let introduction = format!(
        "Research on {topic} has grown steadily in recent years. \
         Modern systems increasingly depend on {topic} components. \
         Robust tooling for {topic} remains scarce in practice. \
         However, existing approaches to {topic} scale poorly. \
         They also degrade sharply when inputs are noisy. \
         Annotation costs further limit progress on {topic}. \
         We introduce a staged pipeline for {topic}. \
         The pipeline separates planning from realization. \
         Experiments across standard suites show consistent gains. \
         A detailed study isolates the contribution of each part. \
         We release a benchmark for {topic}. \
         We provide a reference implementation with full tooling."
    );
    PaperRecord {
        paper_id: format!("p{i:03}"),
        title: format!("A Staged Pipeline for {topic}"),
        abstract_text: format!(
            "We study {topic} and present a staged pipeline that improves robustness \
             while keeping inference cost low."
        ),
        introduction,
        figures: vec![format!("Overview of the staged {topic} pipeline.")],
        tables: vec![TableMaterial {
            description: format!("Main results on the {topic} suite."),
            content: "method | score\nbaseline | 0.41\nours | 0.58".into(),
        }],
        reference_entries: vec![
            ReferenceEntry {
                key: format!("prior{i}2021"),
                title: format!("Prior Work on {topic}"),
            },
            ReferenceEntry {
                key: "1".into(),
                title: format!("Early Study of {topic}"),
            },
        ],
        experiment_text: Some(format!(
            "We compare against Prior{i} et al., 2021 and the system of [1] on {topic}."
        )),
    }
}

pub fn write_papers_jsonl(path: &Path, count: usize) {
    let lines: Vec<String> = (0..count)
        .map(|i| serde_json::to_string(&fixture_paper(i)).unwrap())
        .collect();
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

pub fn stig_cmd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stig"))
}

pub fn run_cli(args: &[&str]) -> Output {
    stig_cmd()
        .args(args)
        .output()
        .expect("spawning the stig binary")
}

pub fn assert_success(output: &Output, context: &str) {
    assert!(
        output.status.success(),
        "{context} failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}
