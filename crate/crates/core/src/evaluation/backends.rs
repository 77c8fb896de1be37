//! Model-backed scoring interfaces and their desk-scale implementations.
//!
//! The metric definitions live in `metrics`; everything behind these traits
//! is swappable: deterministic lexical defaults for tests and offline runs,
//! or live model backends configured by name and endpoint.

use std::sync::Arc;

use thiserror::Error;

use crate::assets;
use crate::generation::{GenerateOptions, GenerationBackend};
use crate::stage::SubsectionKind;

#[derive(Debug, Error)]
pub enum EvalBackendError {
    #[error("evaluation backend error: {0}")]
    Backend(String),
}

/// Scores a pair of texts; higher means more similar. Deterministic given
/// fixed weights and inputs.
pub trait EmbeddingScorer: Send + Sync {
    fn score_pair(&self, a: &str, b: &str) -> Result<f64, EvalBackendError>;
    fn name(&self) -> &str;
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifyContext<'a> {
    /// The full generated introduction the sentence came from.
    pub document: &'a str,
    /// Sentence position within the document, 0-based.
    pub position: usize,
    pub total: usize,
}

/// Assigns one of the four subsections to a sentence.
pub trait SentenceClassifier: Send + Sync {
    fn classify(
        &self,
        sentence: &str,
        context: &ClassifyContext<'_>,
    ) -> Result<SubsectionKind, EvalBackendError>;
    fn name(&self) -> &str;
}

/// Per-token negative log-likelihoods of a text under a causal LM.
#[derive(Debug, Clone, PartialEq)]
pub struct NllSeries {
    pub nlls: Vec<f64>,
    /// True when the text exceeded the model's context window and was scored
    /// on a truncated prefix.
    pub truncated: bool,
}

pub trait PerplexityModel: Send + Sync {
    fn token_nlls(&self, text: &str) -> Result<NllSeries, EvalBackendError>;
    fn name(&self) -> &str;
}

const EMBED_DIM: usize = 128;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Character-trigram hash embedding of one token, L2-normalized.
fn token_vector(token: &str) -> [f64; EMBED_DIM] {
    let mut v = [0f64; EMBED_DIM];
    let padded: Vec<char> = std::iter::once('^')
        .chain(token.chars().flat_map(|c| c.to_lowercase()))
        .chain(std::iter::once('$'))
        .collect();
    let n = padded.len();
    for window in 1..=3usize.min(n) {
        for start in 0..=(n - window) {
            let gram: String = padded[start..start + window].iter().collect();
            let slot = (fnv1a(gram.as_bytes()) % EMBED_DIM as u64) as usize;
            v[slot] += 1.0;
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

fn cosine(a: &[f64; EMBED_DIM], b: &[f64; EMBED_DIM]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn tokens_of(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| c.is_ascii_punctuation()))
        .filter(|t| !t.is_empty())
        .collect()
}

/// Embedding-overlap F-measure over token embeddings: each token greedily
/// matches its most similar counterpart, precision and recall average the
/// match strengths, and the score is their harmonic mean. Identical texts
/// score 1.
pub struct NgramF1Scorer;

impl EmbeddingScorer for NgramF1Scorer {
    fn score_pair(&self, a: &str, b: &str) -> Result<f64, EvalBackendError> {
        let at: Vec<[f64; EMBED_DIM]> = tokens_of(a).iter().map(|t| token_vector(t)).collect();
        let bt: Vec<[f64; EMBED_DIM]> = tokens_of(b).iter().map(|t| token_vector(t)).collect();
        if at.is_empty() || bt.is_empty() {
            return Err(EvalBackendError::Backend("empty text".into()));
        }
        let greedy = |xs: &[[f64; EMBED_DIM]], ys: &[[f64; EMBED_DIM]]| {
            xs.iter()
                .map(|x| ys.iter().map(|y| cosine(x, y)).fold(f64::MIN, f64::max))
                .sum::<f64>()
                / xs.len() as f64
        };
        let precision = greedy(&at, &bt);
        let recall = greedy(&bt, &at);
        if precision + recall == 0.0 {
            return Ok(0.0);
        }
        Ok(2.0 * precision * recall / (precision + recall))
    }

    fn name(&self) -> &str {
        "ngram-f1"
    }
}

/// Cosine similarity of mean token embeddings; the sentence-against-section
/// scorer used by content coverage.
pub struct BagCosineScorer;

impl EmbeddingScorer for BagCosineScorer {
    fn score_pair(&self, a: &str, b: &str) -> Result<f64, EvalBackendError> {
        let mean = |text: &str| -> Option<[f64; EMBED_DIM]> {
            let tokens = tokens_of(text);
            if tokens.is_empty() {
                return None;
            }
            let mut acc = [0f64; EMBED_DIM];
            for token in &tokens {
                let v = token_vector(token);
                for (slot, x) in acc.iter_mut().zip(v) {
                    *slot += x;
                }
            }
            let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in &mut acc {
                    *x /= norm;
                }
            }
            Some(acc)
        };
        match (mean(a), mean(b)) {
            (Some(va), Some(vb)) => Ok(cosine(&va, &vb).clamp(-1.0, 1.0)),
            _ => Err(EvalBackendError::Backend("empty text".into())),
        }
    }

    fn name(&self) -> &str {
        "bag-cosine"
    }
}

/// Fixed-score stub, selectable for tests and dry runs.
pub struct ConstScorer(pub f64);

impl EmbeddingScorer for ConstScorer {
    fn score_pair(&self, _a: &str, _b: &str) -> Result<f64, EvalBackendError> {
        Ok(self.0)
    }

    fn name(&self) -> &str {
        "const"
    }
}

/// Cue-phrase classifier with a positional fallback; the deterministic
/// default for desk-scale structural-rationality scoring.
pub struct HeuristicClassifier;

const CUES: [(SubsectionKind, &[&str]); 4] = [
    (
        SubsectionKind::Contributions,
        &[
            "our contributions",
            "contributions are",
            "we contribute",
            "in summary",
            "to summarize",
            "main contributions",
        ],
    ),
    (
        SubsectionKind::MethodOverviewAndResults,
        &[
            "we propose",
            "we introduce",
            "we present",
            "our method",
            "our approach",
            "experiments show",
            "results show",
            "results demonstrate",
            "outperforms",
            "achieves",
            "we evaluate",
        ],
    ),
    (
        SubsectionKind::ProblemAndLimitations,
        &[
            "however",
            "existing",
            "limitation",
            "challenge",
            "struggle",
            "fail",
            "suffer",
            "costly",
            "scarce",
            "degrade",
            "poorly",
            "unfortunately",
        ],
    ),
    (
        SubsectionKind::Background,
        &[
            "in recent years",
            "recently",
            "has become",
            "widely",
            "fundamental",
            "essential",
            "important",
            "grown",
            "increasingly",
            "plays a",
        ],
    ),
];

impl SentenceClassifier for HeuristicClassifier {
    fn classify(
        &self,
        sentence: &str,
        context: &ClassifyContext<'_>,
    ) -> Result<SubsectionKind, EvalBackendError> {
        let lower = sentence.to_lowercase();
        let mut best: Option<(usize, SubsectionKind)> = None;
        for (kind, cues) in CUES {
            let hits = cues.iter().filter(|c| lower.contains(**c)).count();
            if hits > 0 && best.map(|(b, _)| hits > b).unwrap_or(true) {
                best = Some((hits, kind));
            }
        }
        if let Some((_, kind)) = best {
            return Ok(kind);
        }
        // No cue fired: fall back to the sentence's position quartile.
        let quartile = if context.total == 0 {
            0
        } else {
            (4 * context.position / context.total).min(3)
        };
        Ok(SubsectionKind::from_index(quartile).expect("quartile in range"))
    }

    fn name(&self) -> &str {
        "heuristic"
    }
}

/// Sentence classifier backed by a generation model through the versioned
/// labeling prompt; the reply's first recognizable label wins.
pub struct BackendClassifier {
    backend: Arc<dyn GenerationBackend>,
}

impl BackendClassifier {
    pub fn new(backend: Arc<dyn GenerationBackend>) -> Self {
        BackendClassifier { backend }
    }
}

impl SentenceClassifier for BackendClassifier {
    fn classify(
        &self,
        sentence: &str,
        context: &ClassifyContext<'_>,
    ) -> Result<SubsectionKind, EvalBackendError> {
        let prompt = assets::CLASSIFIER_PROMPT
            .replace("{document}", context.document)
            .replace("{sentence}", sentence);
        let completion = self
            .backend
            .generate(&prompt, &GenerateOptions::default())
            .map_err(|e| EvalBackendError::Backend(e.to_string()))?;
        let reply = completion.text.to_lowercase();
        let scan = [
            (SubsectionKind::ProblemAndLimitations, "problem"),
            (SubsectionKind::MethodOverviewAndResults, "method"),
            (SubsectionKind::Contributions, "contribution"),
            (SubsectionKind::Background, "background"),
        ];
        scan.into_iter()
            .filter_map(|(kind, marker)| reply.find(marker).map(|at| (at, kind)))
            .min_by_key(|(at, _)| *at)
            .map(|(_, kind)| kind)
            .ok_or_else(|| {
                EvalBackendError::Backend(format!("unrecognized label reply {:?}", completion.text))
            })
    }

    fn name(&self) -> &str {
        "backend"
    }
}

fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Uniform LM over a fixed vocabulary: every token costs `ln(V)` nats, so
/// perplexity equals the vocabulary size exactly.
pub struct UniformPerplexity {
    pub vocab_size: u64,
}

impl PerplexityModel for UniformPerplexity {
    fn token_nlls(&self, text: &str) -> Result<NllSeries, EvalBackendError> {
        if self.vocab_size == 0 {
            return Err(EvalBackendError::Backend("vocab size 0".into()));
        }
        let nll = (self.vocab_size as f64).ln();
        Ok(NllSeries {
            nlls: vec![nll; whitespace_tokens(text)],
            truncated: false,
        })
    }

    fn name(&self) -> &str {
        "uniform"
    }
}

/// Assigns every token the same fixed probability; perplexity is exactly its
/// reciprocal. A probability of 1 models a fully deterministic LM.
pub struct ScriptedPerplexity {
    pub per_token_probability: f64,
}

impl PerplexityModel for ScriptedPerplexity {
    fn token_nlls(&self, text: &str) -> Result<NllSeries, EvalBackendError> {
        if !(self.per_token_probability > 0.0 && self.per_token_probability <= 1.0) {
            return Err(EvalBackendError::Backend("probability out of (0, 1]".into()));
        }
        Ok(NllSeries {
            nlls: vec![-self.per_token_probability.ln(); whitespace_tokens(text)],
            truncated: false,
        })
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

/// Add-one-smoothed unigram LM fitted on a reference text, with a fixed
/// context window and truncation flagging. Deterministic and text-sensitive:
/// wording close to the reference scores lower perplexity.
pub struct UnigramPerplexity {
    counts: std::collections::HashMap<String, u64>,
    total: u64,
    vocab: u64,
    pub context_window: usize,
}

impl UnigramPerplexity {
    pub fn fit(reference: &str) -> Self {
        let mut counts = std::collections::HashMap::new();
        let mut total = 0u64;
        for token in reference.split_whitespace() {
            *counts.entry(token.to_lowercase()).or_insert(0) += 1;
            total += 1;
        }
        let vocab = counts.len() as u64 + 1;
        UnigramPerplexity {
            counts,
            total,
            vocab,
            context_window: 1024,
        }
    }
}

impl PerplexityModel for UnigramPerplexity {
    fn token_nlls(&self, text: &str) -> Result<NllSeries, EvalBackendError> {
        let tokens: Vec<String> = text
            .split_whitespace()
            .map(|t| t.to_lowercase())
            .collect();
        let truncated = tokens.len() > self.context_window;
        let window = &tokens[..tokens.len().min(self.context_window)];
        let denom = (self.total + self.vocab) as f64;
        let nlls = window
            .iter()
            .map(|t| {
                let count = self.counts.get(t).copied().unwrap_or(0);
                -(((count + 1) as f64) / denom).ln()
            })
            .collect();
        Ok(NllSeries { nlls, truncated })
    }

    fn name(&self) -> &str {
        "unigram"
    }
}
