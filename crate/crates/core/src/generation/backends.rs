//! Backend adapters: a deterministic mock, a scripted stub for tests, an
//! HTTP completion endpoint, and a line-oriented child-process adapter.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, Completion, GenerateOptions, GenerationBackend};

const MOCK_WORDS: [&str; 24] = [
    "systems", "methods", "analysis", "results", "framework", "pipeline", "structure", "stages",
    "drafting", "corpus", "signals", "evidence", "baselines", "robust", "coherent", "staged",
    "evaluation", "coverage", "planning", "writing", "tokens", "context", "quality", "gains",
];

fn fnv1a(data: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in data.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

struct WordStream(u64);

impl WordStream {
    fn next_word(&mut self) -> &'static str {
        // xorshift64; cheap and stable across platforms and processes.
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        MOCK_WORDS[(self.0 % MOCK_WORDS.len() as u64) as usize]
    }

    /// `count` words shaped into sentences of roughly eight words, so the
    /// downstream sentence splitter sees realistic boundaries. The word
    /// count equals the whitespace token count exactly.
    fn words(&mut self, count: usize) -> String {
        let mut out = String::new();
        let mut in_sentence = 0usize;
        for i in 0..count {
            let word = self.next_word();
            if in_sentence == 0 {
                let mut chars = word.chars();
                let first = chars.next().expect("words are non-empty");
                out.push(first.to_ascii_uppercase());
                out.push_str(chars.as_str());
            } else {
                out.push(' ');
                out.push_str(word);
            }
            in_sentence += 1;
            if in_sentence == 8 || i + 1 == count {
                out.push('.');
                if i + 1 < count {
                    out.push(' ');
                }
                in_sentence = 0;
            }
        }
        out
    }
}

/// Deterministic synthetic backend. Inspects the prompt to answer in the
/// format the workflow expects: staged output when the prompt shows stage
/// tokens, bullet lines when it asks for an outline, four paragraphs under
/// the four-paragraph format requirement, plain prose otherwise. Output is a
/// pure function of (prompt, seed); token counts are whitespace counts.
pub struct MockBackend {
    /// Points emitted when asked for a free-form outline.
    pub outline_points: usize,
    /// Words per generated body or paragraph; staged bodies all share it.
    pub body_words: usize,
    pub seed: u64,
    calls: AtomicU64,
    reported_prompt: AtomicU64,
    reported_completion: AtomicU64,
}

impl Default for MockBackend {
    fn default() -> Self {
        MockBackend {
            outline_points: 4,
            body_words: 24,
            seed: 0,
            calls: AtomicU64::new(0),
            reported_prompt: AtomicU64::new(0),
            reported_completion: AtomicU64::new(0),
        }
    }
}

impl MockBackend {
    pub fn with_seed(seed: u64) -> Self {
        MockBackend {
            seed,
            ..MockBackend::default()
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reported_prompt_tokens(&self) -> u64 {
        self.reported_prompt.load(Ordering::SeqCst)
    }

    pub fn reported_completion_tokens(&self) -> u64 {
        self.reported_completion.load(Ordering::SeqCst)
    }

    fn respond(&self, prompt: &str, seed: u64) -> String {
        let mut stream = WordStream(fnv1a(prompt) ^ seed.wrapping_mul(0x9e3779b97f4a7c15) | 1);
        if prompt.contains("<STAGE0>") {
            let stages = if prompt.contains("<STAGE7>") { 8 } else { 4 };
            let outlines = stages == 8;
            return (0..stages)
                .map(|k| {
                    let body = if outlines && k % 2 == 0 {
                        // Two bullet lines sharing the body word budget.
                        let half = (self.body_words / 2).max(1);
                        format!(
                            "--{}\n--{}",
                            stream.words(half),
                            stream.words(self.body_words - half)
                        )
                    } else {
                        stream.words(self.body_words)
                    };
                    format!("<STAGE{k}> {body} <END{k}>")
                })
                .collect::<Vec<_>>()
                .join("\n");
        }
        if prompt.contains("one outline point per line") {
            return (0..self.outline_points)
                .map(|_| format!("- {}", stream.words(6)))
                .collect::<Vec<_>>()
                .join("\n");
        }
        if prompt.contains("EXACTLY FOUR PARAGRAPHS") {
            return (0..4)
                .map(|_| stream.words(120))
                .collect::<Vec<_>>()
                .join("\n\n");
        }
        stream.words(self.body_words)
    }
}

impl GenerationBackend for MockBackend {
    fn generate(
        &self,
        prompt: &str,
        options: &GenerateOptions,
    ) -> Result<Completion, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self.respond(prompt, options.seed.unwrap_or(self.seed));
        let completion = Completion {
            prompt_token_count: self.count_tokens(prompt),
            completion_token_count: self.count_tokens(&text),
            text,
        };
        self.reported_prompt
            .fetch_add(completion.prompt_token_count, Ordering::SeqCst);
        self.reported_completion
            .fetch_add(completion.completion_token_count, Ordering::SeqCst);
        Ok(completion)
    }

    fn name(&self) -> &str {
        "mock"
    }
}

/// Replays a fixed queue of completions and records the prompts it received.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    responses: Mutex<Vec<String>>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new(responses: Vec<String>) -> Self {
        ScriptedBackend {
            responses: Mutex::new(responses),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }

    pub fn calls(&self) -> usize {
        self.prompts.lock().unwrap().len()
    }
}

impl GenerationBackend for ScriptedBackend {
    fn generate(
        &self,
        prompt: &str,
        _options: &GenerateOptions,
    ) -> Result<Completion, BackendError> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        let mut responses = self.responses.lock().unwrap();
        if responses.is_empty() {
            return Err(BackendError::Exhausted);
        }
        let text = responses.remove(0);
        Ok(Completion {
            prompt_token_count: self.count_tokens(prompt),
            completion_token_count: self.count_tokens(&text),
            text,
        })
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    prompt: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_new_tokens: Option<u32>,
    temperature: f64,
    stop: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

fn wire_request<'a>(prompt: &'a str, options: &'a GenerateOptions) -> WireRequest<'a> {
    WireRequest {
        prompt,
        max_new_tokens: options.max_new_tokens,
        temperature: options.temperature,
        stop: &options.stop_literals,
        seed: options.seed,
    }
}

/// Adapter for an HTTP completion endpoint: POST a JSON request, read back
/// `{"text", "prompt_tokens", "completion_tokens"}`.
pub struct HttpCompletionBackend {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpCompletionBackend {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpCompletionBackend {
            endpoint: endpoint.into(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(600))
                .build()
                .expect("default TLS backend available"),
        }
    }
}

impl GenerationBackend for HttpCompletionBackend {
    fn generate(
        &self,
        prompt: &str,
        options: &GenerateOptions,
    ) -> Result<Completion, BackendError> {
        let response = self
            .client
            .post(&self.endpoint)
            .json(&wire_request(prompt, options))
            .send()
            .map_err(|e| BackendError::Request(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(BackendError::Request(format!("HTTP {status}")));
        }
        let body: WireResponse = response
            .json()
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        Ok(Completion {
            text: body.text,
            prompt_token_count: body.prompt_tokens,
            completion_token_count: body.completion_tokens,
        })
    }

    fn name(&self) -> &str {
        "http"
    }
}

/// Adapter for a local inference process speaking one JSON request and one
/// JSON response per line over stdin/stdout. Single-flight: a mutex
/// serializes calls onto the child's pipes.
pub struct ProcessBackend {
    child: Mutex<Child>,
    pipes: Mutex<(ChildStdin, BufReader<ChildStdout>)>,
}

impl ProcessBackend {
    /// Spawns `command` through `sh -c`.
    pub fn spawn(command: &str) -> Result<Self, BackendError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| BackendError::Request(format!("spawn {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        Ok(ProcessBackend {
            child: Mutex::new(child),
            pipes: Mutex::new((stdin, BufReader::new(stdout))),
        })
    }
}

impl Drop for ProcessBackend {
    fn drop(&mut self) {
        if let Ok(mut child) = self.child.lock() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl GenerationBackend for ProcessBackend {
    fn generate(
        &self,
        prompt: &str,
        options: &GenerateOptions,
    ) -> Result<Completion, BackendError> {
        let request = serde_json::to_string(&wire_request(prompt, options))
            .expect("request serializes");
        let mut pipes = self.pipes.lock().expect("pipes lock");
        let (stdin, stdout) = &mut *pipes;
        writeln!(stdin, "{request}").map_err(|e| BackendError::Request(e.to_string()))?;
        stdin.flush().map_err(|e| BackendError::Request(e.to_string()))?;
        let mut line = String::new();
        let read = stdout
            .read_line(&mut line)
            .map_err(|e| BackendError::Request(e.to_string()))?;
        if read == 0 {
            return Err(BackendError::Request("process closed its stdout".into()));
        }
        let body: WireResponse = serde_json::from_str(line.trim())
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        Ok(Completion {
            text: body.text,
            prompt_token_count: body.prompt_tokens,
            completion_token_count: body.completion_tokens,
        })
    }

    fn name(&self) -> &str {
        "process"
    }
}
