//! Per-run artifact directories: raw outputs, intermediates, the token
//! ledger, and the final introduction, laid out for resumable batch runs.

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::WorkflowResult;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("run artifact io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("run result at {path} is malformed: {source}")]
    Malformed {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes one run's artifacts under `run_dir`:
/// `introduction.txt`, `ledger.json`, `result.json`,
/// `intermediates/<step>.txt`, and `diagnostics.txt` when non-empty.
pub fn write_run_artifacts(run_dir: &Path, result: &WorkflowResult) -> Result<(), ArtifactError> {
    fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;

    let result_path = run_dir.join("result.json");
    let json = serde_json::to_string_pretty(result).expect("results serialize");
    fs::write(&result_path, format!("{json}\n")).map_err(io_err(&result_path))?;

    let ledger_path = run_dir.join("ledger.json");
    let ledger = serde_json::to_string_pretty(&result.ledger).expect("ledgers serialize");
    fs::write(&ledger_path, format!("{ledger}\n")).map_err(io_err(&ledger_path))?;

    if !result.intermediates.is_empty() {
        let dir = run_dir.join("intermediates");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for (step, text) in &result.intermediates {
            let path = dir.join(format!("{step}.txt"));
            fs::write(&path, text).map_err(io_err(&path))?;
        }
    }
    if !result.diagnostics.is_empty() {
        let path = run_dir.join("diagnostics.txt");
        fs::write(&path, result.diagnostics.join("\n") + "\n").map_err(io_err(&path))?;
    }

    // Written last: its presence marks the run complete for resume checks.
    let intro_path = run_dir.join("introduction.txt");
    fs::write(&intro_path, &result.introduction).map_err(io_err(&intro_path))?;
    Ok(())
}

/// A run directory counts as done once its introduction exists.
pub fn run_exists(run_dir: &Path) -> bool {
    run_dir.join("introduction.txt").is_file()
}

pub fn read_run_result(run_dir: &Path) -> Result<WorkflowResult, ArtifactError> {
    let path = run_dir.join("result.json");
    let data = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&data).map_err(|source| ArtifactError::Malformed {
        path: path.display().to_string(),
        source,
    })
}
