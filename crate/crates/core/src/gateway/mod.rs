//! Provider-agnostic chat and embedding access.
//!
//! Agents talk to a [`Gateway`], never to a provider directly. The gateway
//! applies the retry policy and records every successful exchange in the
//! run transcript, which [`ScriptedChat::from_transcript`] can replay.

mod embedding;
mod mock;
#[cfg(feature = "native")]
pub mod remote;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use embedding::{cosine_similarity, fnv1a, EmbeddingVector, SimilarityError, TokenHashEmbedder};
pub use mock::{MockScript, ScriptedChat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Seeker,
    Innovator,
    Executor,
}

impl AgentRole {
    pub const ALL: [AgentRole; 3] = [AgentRole::Seeker, AgentRole::Innovator, AgentRole::Executor];

    pub fn name(self) -> &'static str {
        match self {
            AgentRole::Seeker => "seeker",
            AgentRole::Innovator => "innovator",
            AgentRole::Executor => "executor",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub model: String,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            messages,
            model: model.into(),
            temperature: 0.0,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: TokenUsage,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub agent: AgentRole,
    pub request: ChatRequest,
    pub response: ChatResponse,
}

/// Ordered record of every chat exchange in a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub run_id: String,
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new(run_id: impl Into<String>) -> Self {
        Self {
            run_id: run_id.into(),
            entries: Vec::new(),
        }
    }

    pub fn replies_by_role(&self) -> BTreeMap<AgentRole, Vec<ChatResponse>> {
        let mut out: BTreeMap<AgentRole, Vec<ChatResponse>> = BTreeMap::new();
        for entry in &self.entries {
            out.entry(entry.agent).or_default().push(entry.response.clone());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("network error: {0}")]
    Network(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("no scripted reply left for {0}")]
    ScriptExhausted(AgentRole),
    #[error("provider not configured: {0}")]
    NotConfigured(String),
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Network(_) => true,
            GatewayError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, agent: AgentRole, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn immediate() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay
            .saturating_mul(1u32 << attempt.min(16))
            .min(self.max_delay)
    }

    /// Runs `op`, retrying retryable failures with exponential backoff.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, GatewayError>) -> Result<T, GatewayError> {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    tracing::warn!(attempt, error = %e, "retrying provider call");
                    let delay = self.delay(attempt);
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

pub struct Gateway {
    chat: Box<dyn ChatProvider>,
    embedder: Box<dyn Embedder>,
    retry: RetryPolicy,
    model: String,
    transcript: Mutex<Transcript>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("model", &self.model)
            .field("retry", &self.retry)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(chat: Box<dyn ChatProvider>, embedder: Box<dyn Embedder>) -> Self {
        Self {
            chat,
            embedder,
            retry: RetryPolicy::default(),
            model: "mock".to_string(),
            transcript: Mutex::new(Transcript::default()),
        }
    }

    /// Scripted chat plus the 64-dimensional token-hash embedder.
    pub fn mock(script: ScriptedChat) -> Self {
        Self::new(Box::new(script), Box::new(TokenHashEmbedder::default())).with_retry(RetryPolicy::immediate())
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn with_run_id(self, run_id: impl Into<String>) -> Self {
        self.transcript.lock().expect("transcript lock").run_id = run_id.into();
        self
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    /// Sends a system + user prompt pair on behalf of `agent`.
    pub fn prompt(&self, agent: AgentRole, system: &str, user: &str) -> Result<ChatResponse, GatewayError> {
        let request = ChatRequest::new(self.model.clone(), vec![Message::system(system), Message::user(user)]);
        self.chat(agent, request)
    }

    pub fn chat(&self, agent: AgentRole, request: ChatRequest) -> Result<ChatResponse, GatewayError> {
        let response = self.retry.run(|| self.chat.complete(agent, &request))?;
        self.transcript
            .lock()
            .expect("transcript lock")
            .entries
            .push(TranscriptEntry {
                agent,
                request,
                response: response.clone(),
            });
        Ok(response)
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let vectors = self.retry.run(|| self.embedder.embed(texts))?;
        if vectors.len() != texts.len() {
            return Err(GatewayError::Malformed(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                vectors.len()
            )));
        }
        if let Some(first) = vectors.first() {
            let dim = first.dimension();
            if vectors.iter().any(|v| v.dimension() != dim) {
                return Err(GatewayError::Malformed("embeddings of mixed dimension".into()));
            }
        }
        Ok(vectors)
    }

    pub fn transcript(&self) -> Transcript {
        self.transcript.lock().expect("transcript lock").clone()
    }
}
