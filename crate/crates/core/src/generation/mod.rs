//! Generation workflows over a pluggable text-generation backend, with
//! per-call token accounting.

mod artifacts;
mod backends;
mod workflows;

pub use artifacts::{read_run_result, run_exists, write_run_artifacts};
pub use backends::{HttpCompletionBackend, MockBackend, ProcessBackend, ScriptedBackend};
pub use workflows::{
    run_elaborate_prompt, run_outline_writing, run_pure_prompt, run_stage_writing, run_stig,
    Workflow,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stage::SubsectionKind;

/// Decoding options passed through to the backend. Defaults are greedy
/// (temperature 0) for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub max_new_tokens: Option<u32>,
    pub temperature: f64,
    pub stop_literals: Vec<String>,
    pub seed: Option<u64>,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            max_new_tokens: None,
            temperature: 0.0,
            stop_literals: Vec::new(),
            seed: None,
        }
    }
}

/// One backend completion with the backend's own token accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub prompt_token_count: u64,
    pub completion_token_count: u64,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend request failed: {0}")]
    Request(String),
    #[error("backend reply malformed: {0}")]
    Malformed(String),
    #[error("backend exhausted its scripted responses")]
    Exhausted,
}

/// A text-generation backend. Implementations must either tolerate
/// concurrent calls or serialize internally.
pub trait GenerationBackend: Send + Sync {
    fn generate(&self, prompt: &str, options: &GenerateOptions)
        -> Result<Completion, BackendError>;

    /// Token count of `text` under this backend's accounting; used to
    /// attribute completion tokens to the final introduction. The default
    /// whitespace count suits backends without a tokenize endpoint.
    fn count_tokens(&self, text: &str) -> u64 {
        text.split_whitespace().count() as u64
    }

    fn name(&self) -> &str {
        "backend"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerCall {
    pub workflow_step: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum LedgerError {
    #[error("effectiveness ratio undefined: ledger has zero total tokens")]
    ZeroTotal,
}

/// Per-call token counts for one workflow run, plus the count of completion
/// tokens attributable to the final introduction text.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenLedger {
    pub calls: Vec<LedgerCall>,
    pub effective_tokens: u64,
}

impl TokenLedger {
    pub fn record(&mut self, workflow_step: impl Into<String>, completion: &Completion) {
        self.calls.push(LedgerCall {
            workflow_step: workflow_step.into(),
            prompt_tokens: completion.prompt_token_count,
            completion_tokens: completion.completion_token_count,
        });
    }

    pub fn total_tokens(&self) -> u64 {
        self.calls
            .iter()
            .map(|c| c.prompt_tokens + c.completion_tokens)
            .sum()
    }

    pub fn completion_tokens(&self) -> u64 {
        self.calls.iter().map(|c| c.completion_tokens).sum()
    }

    /// effective / total, in `(0, 1]` for any run that spent tokens.
    pub fn effectiveness_ratio(&self) -> Result<f64, LedgerError> {
        let total = self.total_tokens();
        if total == 0 {
            return Err(LedgerError::ZeroTotal);
        }
        Ok(self.effective_tokens as f64 / total as f64)
    }
}

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("generation failure: no recoverable stages in backend output")]
    NoRecoverableStages { raw: String },
    #[error("generation failure: empty completion at step {step}")]
    EmptyCompletion { step: String },
    #[error("outline call produced no outline points")]
    EmptyOutline { raw: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Everything a workflow run produced: the final introduction, the token
/// ledger, named intermediate texts, and diagnostics (parse recoveries,
/// structure notes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowResult {
    pub workflow: String,
    pub introduction: String,
    /// Per-subsection content when the workflow produces sectioned output
    /// (staged single-inference and stage-writing runs).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sections: Option<BTreeMap<SubsectionKind, String>>,
    pub ledger: TokenLedger,
    pub intermediates: BTreeMap<String, String>,
    pub diagnostics: Vec<String>,
}
