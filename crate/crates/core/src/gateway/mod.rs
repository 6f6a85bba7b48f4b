//! Uniform access to the chat-completion, embedding and NLI services.
//!
//! Each service is a transport trait with a remote HTTP implementation and a
//! deterministic offline mock. [`Gateway`] layers validation, retries with
//! exponential backoff and one shared requests-per-minute limiter on top.

pub mod clock;
pub mod mock;
pub mod rate_limit;
pub mod remote;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use clock::{Clock, SystemClock, VirtualClock};
pub use rate_limit::RateLimiter;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    /// Call-site tag ("seeker", "recommender-recommend", ...). Not sent to
    /// remote services; mocks dispatch on it.
    pub tag: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), String> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err("prompts must be non-empty".into());
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(format!("invalid temperature {}", self.temperature));
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be positive".into());
        }
        Ok(())
    }
}

/// Sampling parameters for one call site; turns a prompt into a request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatParams {
    pub system_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatParams {
    pub fn simulator() -> Self {
        Self { system_prompt: "You are a helpful assistant.".into(), temperature: 0.8, max_tokens: 512 }
    }

    pub fn summarizer() -> Self {
        Self { system_prompt: "You are a helpful assistant.".into(), temperature: 0.0, max_tokens: 512 }
    }

    pub fn request(&self, tag: &str, prompt: String, seed: Option<u64>) -> ChatRequest {
        ChatRequest {
            tag: tag.to_string(),
            system_prompt: self.system_prompt.clone(),
            user_prompt: prompt,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// What a transport returns for one successful attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCompletion {
    pub text: String,
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub model_tag: String,
    #[serde(default)]
    pub truncated: bool,
}

impl EmbeddingVector {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        cosine(&self.values, &other.values)
    }
}

/// Cosine similarity; zero when either side has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliScores {
    pub entail: f64,
    pub neutral: f64,
    pub contradict: f64,
}

impl NliScores {
    pub fn validate(&self) -> Result<(), String> {
        let parts = [self.entail, self.neutral, self.contradict];
        if parts.iter().any(|p| !p.is_finite() || !(0.0..=1.0).contains(p)) {
            return Err(format!("NLI probabilities out of range: {self:?}"));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(format!("NLI probabilities sum to {sum}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError {
    pub transient: bool,
    pub message: String,
}

impl TransportError {
    pub fn transient(message: impl Into<String>) -> Self {
        Self { transient: true, message: message.into() }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self { transient: false, message: message.into() }
    }
}

pub trait ChatTransport: Send + Sync {
    fn model_tag(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<RawCompletion, TransportError>;
}

pub trait EmbeddingTransport: Send + Sync {
    fn model_tag(&self) -> &str;
    /// Whitespace tokens accepted before the tail is truncated.
    fn max_input_tokens(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, TransportError>;
}

pub trait NliTransport: Send + Sync {
    fn model_tag(&self) -> &str;
    fn score(&self, premise: &str, hypothesis: &str) -> Result<NliScores, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("{operation} failed after {} attempt(s): {}", attempts.len(), attempts.last().map(|a| a.error.as_str()).unwrap_or(""))]
    Transport { operation: &'static str, attempts: Vec<AttemptRecord> },
    #[error("empty completion")]
    EmptyCompletion,
    #[error("invalid response: {0}")]
    InvalidResponse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    /// Multiplicative jitter: each delay is scaled by `1 + U[0, jitter)`.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay_ms: 1000, max_delay_ms: 30_000, jitter: 0.25 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let exp = self.base_delay_ms.saturating_mul(1u64 << (retry.saturating_sub(1)).min(20));
        let capped = exp.min(self.max_delay_ms) as f64;
        let jitter = if self.jitter > 0.0 { rand::thread_rng().gen_range(0.0..self.jitter) } else { 0.0 };
        Duration::from_secs_f64(capped * (1.0 + jitter) / 1000.0)
    }
}

/// Request and token counters, shared by every session using a gateway.
#[derive(Debug, Default)]
pub struct GatewayStats {
    chat_requests: AtomicU64,
    embedding_requests: AtomicU64,
    nli_requests: AtomicU64,
    transport_attempts: AtomicU64,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsSnapshot {
    pub chat_requests: u64,
    pub embedding_requests: u64,
    pub nli_requests: u64,
    pub transport_attempts: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl StatsSnapshot {
    pub fn total_requests(&self) -> u64 {
        self.chat_requests + self.embedding_requests + self.nli_requests
    }

    pub fn since(&self, earlier: &StatsSnapshot) -> StatsSnapshot {
        StatsSnapshot {
            chat_requests: self.chat_requests - earlier.chat_requests,
            embedding_requests: self.embedding_requests - earlier.embedding_requests,
            nli_requests: self.nli_requests - earlier.nli_requests,
            transport_attempts: self.transport_attempts - earlier.transport_attempts,
            prompt_tokens: self.prompt_tokens - earlier.prompt_tokens,
            completion_tokens: self.completion_tokens - earlier.completion_tokens,
        }
    }
}

/// Model tags of the three backends, stamped into generated dialogues.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendTags {
    pub chat: String,
    pub embedding: String,
    pub nli: String,
}

pub struct Gateway {
    chat: Arc<dyn ChatTransport>,
    embedder: Arc<dyn EmbeddingTransport>,
    nli: Arc<dyn NliTransport>,
    policy: RetryPolicy,
    limiter: Arc<RateLimiter>,
    clock: Arc<dyn Clock>,
    stats: GatewayStats,
}

impl Gateway {
    pub fn new(
        chat: Arc<dyn ChatTransport>,
        embedder: Arc<dyn EmbeddingTransport>,
        nli: Arc<dyn NliTransport>,
        policy: RetryPolicy,
        rpm: Option<u32>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        let limiter = Arc::new(RateLimiter::new(rpm, clock.clone()));
        Self { chat, embedder, nli, policy, limiter, clock, stats: GatewayStats::default() }
    }

    /// All-mock gateway with no rate limit.
    pub fn mock(seed: u64) -> Self {
        Self::new(
            Arc::new(mock::MockChat::new(seed)),
            Arc::new(mock::MockEmbedder::new(seed)),
            Arc::new(mock::RuleNli),
            RetryPolicy::default(),
            None,
            Arc::new(SystemClock::default()),
        )
    }

    pub fn tags(&self) -> BackendTags {
        BackendTags {
            chat: self.chat.model_tag().to_string(),
            embedding: self.embedder.model_tag().to_string(),
            nli: self.nli.model_tag().to_string(),
        }
    }

    pub fn stats(&self) -> StatsSnapshot {
        let s = &self.stats;
        StatsSnapshot {
            chat_requests: s.chat_requests.load(Ordering::Relaxed),
            embedding_requests: s.embedding_requests.load(Ordering::Relaxed),
            nli_requests: s.nli_requests.load(Ordering::Relaxed),
            transport_attempts: s.transport_attempts.load(Ordering::Relaxed),
            prompt_tokens: s.prompt_tokens.load(Ordering::Relaxed),
            completion_tokens: s.completion_tokens.load(Ordering::Relaxed),
        }
    }

    fn with_retries<T>(
        &self,
        operation: &'static str,
        mut call: impl FnMut() -> Result<T, TransportError>,
    ) -> Result<(T, u32), GatewayError> {
        let mut log = Vec::new();
        let budget = self.policy.max_attempts.max(1);
        for attempt in 1..=budget {
            self.limiter.acquire();
            self.stats.transport_attempts.fetch_add(1, Ordering::Relaxed);
            match call() {
                Ok(v) => return Ok((v, attempt)),
                Err(e) => {
                    let transient = e.transient;
                    log.push(AttemptRecord { attempt, error: e.message });
                    if !transient {
                        break;
                    }
                    if attempt < budget {
                        self.clock.sleep(self.policy.delay(attempt));
                    }
                }
            }
        }
        Err(GatewayError::Transport { operation, attempts: log })
    }

    pub fn chat(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        request.validate().map_err(GatewayError::InvalidRequest)?;
        self.stats.chat_requests.fetch_add(1, Ordering::Relaxed);
        let (raw, attempts) = self.with_retries("chat", || self.chat.complete(request))?;
        if let Some(u) = raw.usage {
            self.stats.prompt_tokens.fetch_add(u.prompt_tokens, Ordering::Relaxed);
            self.stats.completion_tokens.fetch_add(u.completion_tokens, Ordering::Relaxed);
        }
        if raw.text.trim().is_empty() {
            return Err(GatewayError::EmptyCompletion);
        }
        Ok(Completion { text: raw.text, attempts, usage: raw.usage })
    }

    /// Embed `text`; input beyond the model's token limit is cut from the tail
    /// and flagged.
    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty text".into()));
        }
        let limit = self.embedder.max_input_tokens();
        let word_total = text.split_whitespace().count();
        let (input, truncated) = if word_total > limit {
            (text.split_whitespace().take(limit).collect::<Vec<_>>().join(" "), true)
        } else {
            (text.to_string(), false)
        };
        self.stats.embedding_requests.fetch_add(1, Ordering::Relaxed);
        let (values, _) = self.with_retries("embed", || self.embedder.embed(&input))?;
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(GatewayError::InvalidResponse("non-finite or empty embedding".into()));
        }
        Ok(EmbeddingVector { values, model_tag: self.embedder.model_tag().to_string(), truncated })
    }

    pub fn nli(&self, premise: &str, hypothesis: &str) -> Result<NliScores, GatewayError> {
        if premise.trim().is_empty() || hypothesis.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("NLI texts must be non-empty".into()));
        }
        self.stats.nli_requests.fetch_add(1, Ordering::Relaxed);
        let (scores, _) = self.with_retries("nli", || self.nli.score(premise, hypothesis))?;
        scores.validate().map_err(GatewayError::InvalidResponse)?;
        Ok(scores)
    }
}
