//! OpenAI-compatible chat-completions and embeddings endpoints.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{AgentRole, ChatProvider, ChatRequest, ChatResponse, Embedder, EmbeddingVector, GatewayError, TokenUsage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub chat_model: String,
    pub embedding_model: String,
    pub timeout_secs: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            chat_model: "gpt-4o".into(),
            embedding_model: "text-embedding-3-small".into(),
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteProvider {
    config: RemoteConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig, api_key: impl Into<String>) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::NotConfigured(e.to_string()))?;
        Ok(Self {
            config,
            api_key: api_key.into(),
            client,
        })
    }

    /// Reads the API key from the configured environment variable.
    pub fn from_env(config: RemoteConfig) -> Result<Self, GatewayError> {
        let key = std::env::var(&config.api_key_env)
            .map_err(|_| GatewayError::NotConfigured(format!("environment variable {} is not set", config.api_key_env)))?;
        Self::new(config, key)
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn post(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value, GatewayError> {
        let url = format!("{}/{}", self.config.base_url.trim_end_matches('/'), path);
        let response = self
            .client
            .post(url)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| GatewayError::Network(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response.text().map_err(|e| GatewayError::Network(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| GatewayError::Malformed(e.to_string())),
            401 | 403 => Err(GatewayError::Auth(text)),
            _ => Err(GatewayError::Http { status, body: text }),
        }
    }
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<UsageBody>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct UsageBody {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct EmbeddingBody {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    #[serde(default)]
    index: usize,
    embedding: Vec<f64>,
}

impl ChatProvider for RemoteProvider {
    fn complete(&self, _agent: AgentRole, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let model = if request.model.is_empty() || request.model == "mock" {
            self.config.chat_model.as_str()
        } else {
            request.model.as_str()
        };
        let mut body = json!({
            "model": model,
            "messages": request.messages,
            "temperature": request.temperature,
        });
        if let Some(max) = request.max_tokens {
            body["max_tokens"] = json!(max);
        }
        let started = Instant::now();
        let value = self.post("chat/completions", &body)?;
        let latency_ms = started.elapsed().as_millis() as u64;
        let parsed: CompletionBody = serde_json::from_value(value).map_err(|e| GatewayError::Malformed(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::Malformed("response has no message content".into()))?;
        let usage = parsed
            .usage
            .map(|u| TokenUsage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            })
            .unwrap_or_default();
        Ok(ChatResponse { text, usage, latency_ms })
    }
}

impl Embedder for RemoteProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        let body = json!({ "model": self.config.embedding_model, "input": texts });
        let value = self.post("embeddings", &body)?;
        let mut parsed: EmbeddingBody = serde_json::from_value(value).map_err(|e| GatewayError::Malformed(e.to_string()))?;
        parsed.data.sort_by_key(|d| d.index);
        Ok(parsed.data.into_iter().map(|d| EmbeddingVector::new(d.embedding)).collect())
    }
}
