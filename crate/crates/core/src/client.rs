//! Chat-completion client used for dataset labeling and for sampling
//! evaluation completions.

use std::collections::HashSet;
use std::io;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::Labeler;
use crate::harness::Problem;
use crate::TemperatureKey;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("request failed: {0}")]
    RequestFailed(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("model returned an empty reply")]
    EmptyReply,
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ClientError {
    fn is_retryable(&self) -> bool {
        match self {
            ClientError::Config(_) | ClientError::Io(_) => false,
            ClientError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }
}

/// Request body in the common chat-completions shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatResponse {
    pub choices: Vec<ChatChoice>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatChoice {
    pub message: ChatReplyMessage,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatReplyMessage {
    #[serde(default)]
    pub role: Option<String>,
    #[serde(default)]
    pub content: Option<String>,
}

impl ChatResponse {
    pub fn into_text(self) -> Result<String, ClientError> {
        self.choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or_else(|| ClientError::MalformedResponse("no choices".into()))
    }
}

/// Anything that can answer a chat request with reply text.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError>;
}

impl<F> ChatBackend for F
where
    F: Fn(&ChatRequest) -> Result<String, ClientError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        self(request)
    }
}

/// Blocking HTTP backend posting JSON to a chat-completions endpoint.
pub struct HttpChat {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpChat {
    pub fn new(endpoint: &str, timeout: Duration, api_key: Option<String>) -> Result<Self, ClientError> {
        validate_endpoint(endpoint)?;
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        Ok(HttpChat { agent, endpoint: endpoint.to_string(), api_key })
    }

    /// Reads the bearer token from the environment variable `api_key_env`;
    /// an unset variable means no auth header.
    pub fn from_env(endpoint: &str, timeout: Duration, api_key_env: &str) -> Result<Self, ClientError> {
        let key = std::env::var(api_key_env).ok().filter(|k| !k.is_empty());
        HttpChat::new(endpoint, timeout, key)
    }
}

fn validate_endpoint(endpoint: &str) -> Result<(), ClientError> {
    let uri: ureq::http::Uri =
        endpoint.parse().map_err(|e| ClientError::Config(format!("bad endpoint `{endpoint}`: {e}")))?;
    match (uri.scheme_str(), uri.host()) {
        (Some("http" | "https"), Some(_)) => Ok(()),
        _ => Err(ClientError::Config(format!("bad endpoint `{endpoint}`: expected an http(s) URL"))),
    }
}

impl ChatBackend for HttpChat {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(request).map_err(|e| ClientError::RequestFailed(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(ClientError::Status { status: status.as_u16(), body });
        }
        let parsed: ChatResponse =
            resp.body_mut().read_json().map_err(|e| ClientError::MalformedResponse(e.to_string()))?;
        parsed.into_text()
    }
}

/// Retry count and first backoff delay; the delay doubles per attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { retries: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    pub fn run<T>(&self, mut attempt: impl FnMut() -> Result<T, ClientError>) -> Result<T, ClientError> {
        let mut tries = 0;
        loop {
            match attempt() {
                Ok(v) => return Ok(v),
                Err(e) if tries < self.retries && e.is_retryable() => {
                    let delay = self.base_delay.saturating_mul(1 << tries.min(16));
                    log::debug!("attempt {} failed ({e}); retrying in {delay:?}", tries + 1);
                    thread::sleep(delay);
                    tries += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub num_samples_per_problem: u32,
    pub max_new_tokens: u32,
    pub model_name: String,
    pub endpoint_url: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    /// In-flight request limit.
    pub concurrency: usize,
    pub system_prompt: Option<String>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            temperature: 0.2,
            num_samples_per_problem: 20,
            max_new_tokens: 500,
            model_name: String::new(),
            endpoint_url: String::new(),
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
            concurrency: 4,
            system_prompt: None,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), ClientError> {
        let bad = |m: &str| Err(ClientError::Config(m.to_string()));
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be a finite value >= 0");
        }
        if self.num_samples_per_problem == 0 {
            return bad("num_samples_per_problem must be positive");
        }
        if self.max_new_tokens == 0 {
            return bad("max_new_tokens must be positive");
        }
        if self.concurrency == 0 {
            return bad("concurrency must be positive");
        }
        if self.model_name.is_empty() {
            return bad("model name is empty");
        }
        Ok(())
    }

    pub fn request_for(&self, problem: &Problem) -> ChatRequest {
        let mut messages = Vec::new();
        if let Some(system) = &self.system_prompt {
            messages.push(ChatMessage::system(system.clone()));
        }
        messages.push(ChatMessage::user(problem.description.clone()));
        ChatRequest {
            model: self.model_name.clone(),
            messages,
            temperature: self.temperature,
            max_tokens: self.max_new_tokens,
        }
    }
}

/// One model completion for one task. The completion text is stored
/// exactly as received.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub task_id: String,
    pub sample_index: u32,
    pub temperature: f64,
    pub completion: String,
}

impl RawSample {
    pub fn sort_key(&self) -> (&str, TemperatureKey, u32) {
        (&self.task_id, TemperatureKey::new(self.temperature), self.sample_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleFailure {
    pub task_id: String,
    pub sample_index: u32,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct GenerationSummary {
    /// Previously existing samples plus new ones, sorted by
    /// (task_id, temperature, sample_index).
    pub samples: Vec<RawSample>,
    pub requested: usize,
    pub skipped_existing: usize,
    /// Requests that still failed after retries; stored with an empty
    /// completion.
    pub failures: Vec<SampleFailure>,
}

/// Requests `num_samples_per_problem` completions per problem at the
/// configured temperature, skipping triples already in `existing`.
/// `on_sample` is called as each sample arrives so callers can persist
/// incrementally.
pub fn generate_samples(
    problems: &[Problem],
    config: &GenerationConfig,
    backend: &dyn ChatBackend,
    existing: Vec<RawSample>,
    mut on_sample: impl FnMut(&RawSample) -> io::Result<()>,
) -> Result<GenerationSummary, ClientError> {
    config.validate()?;
    if problems.is_empty() {
        return Err(ClientError::Config("no problems to generate for".into()));
    }
    let temp = TemperatureKey::new(config.temperature);
    let have: HashSet<(&str, u32)> = existing
        .iter()
        .filter(|s| TemperatureKey::new(s.temperature) == temp)
        .map(|s| (s.task_id.as_str(), s.sample_index))
        .collect();

    let mut jobs: Vec<(&Problem, u32)> = Vec::new();
    let mut skipped = 0;
    for p in problems {
        for idx in 0..config.num_samples_per_problem {
            if have.contains(&(p.task_id.as_str(), idx)) {
                skipped += 1;
            } else {
                jobs.push((p, idx));
            }
        }
    }
    drop(have);

    let next = AtomicUsize::new(0);
    let mut fresh: Vec<RawSample> = Vec::with_capacity(jobs.len());
    let mut failures = Vec::new();

    thread::scope(|scope| -> Result<(), ClientError> {
        let (tx, rx) = mpsc::channel();
        for _ in 0..config.concurrency.min(jobs.len().max(1)) {
            let tx = tx.clone();
            let (jobs, next) = (&jobs, &next);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(problem, idx)) = jobs.get(i) else { break };
                let request = config.request_for(problem);
                let reply = config.retry.run(|| backend.complete(&request));
                if tx.send((problem, idx, reply)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (problem, idx, reply) in rx {
            let completion = match reply {
                Ok(text) => text,
                Err(ClientError::Config(m)) => return Err(ClientError::Config(m)),
                Err(e) => {
                    log::warn!("{} #{idx}: {e}", problem.task_id);
                    failures.push(SampleFailure {
                        task_id: problem.task_id.clone(),
                        sample_index: idx,
                        error: e.to_string(),
                    });
                    String::new()
                }
            };
            let sample = RawSample {
                task_id: problem.task_id.clone(),
                sample_index: idx,
                temperature: config.temperature,
                completion,
            };
            on_sample(&sample)?;
            fresh.push(sample);
        }
        Ok(())
    })?;

    let requested = fresh.len();
    let mut samples = existing;
    samples.extend(fresh);
    samples.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    samples.dedup_by(|a, b| a.sort_key() == b.sort_key());
    failures.sort_by(|a, b| (&a.task_id, a.sample_index).cmp(&(&b.task_id, b.sample_index)));
    Ok(GenerationSummary { samples, requested, skipped_existing: skipped, failures })
}

pub const DEFAULT_LABEL_INSTRUCTION: &str = "Describe what the following Verilog module does in one short sentence. \
Reply with the description only.";

#[derive(Debug, Clone, PartialEq)]
pub struct LabelConfig {
    pub model_name: String,
    pub instruction: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub retry: RetryPolicy,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            model_name: String::new(),
            instruction: DEFAULT_LABEL_INSTRUCTION.to_string(),
            temperature: 0.0,
            max_tokens: 64,
            retry: RetryPolicy::default(),
        }
    }
}

/// Asks the model for a short description of `module_text`; returns the
/// first line of the reply, trimmed.
pub fn label_description(
    module_text: &str,
    config: &LabelConfig,
    backend: &dyn ChatBackend,
) -> Result<String, ClientError> {
    let request = ChatRequest {
        model: config.model_name.clone(),
        messages: vec![ChatMessage::system(config.instruction.clone()), ChatMessage::user(module_text)],
        temperature: config.temperature,
        max_tokens: config.max_tokens,
    };
    let reply = config.retry.run(|| backend.complete(&request))?;
    let line = reply.trim().lines().next().unwrap_or("").trim();
    if line.is_empty() {
        return Err(ClientError::EmptyReply);
    }
    Ok(line.to_string())
}

/// [`Labeler`] backed by a chat model.
pub struct ModelLabeler<B> {
    pub backend: B,
    pub config: LabelConfig,
}

impl<B: ChatBackend> Labeler for ModelLabeler<B> {
    fn describe(&self, module_text: &str) -> Result<String, ClientError> {
        label_description(module_text, &self.config, &self.backend)
    }
}
