//! Chat-completion clients, retry policy and the content-addressed response
//! cache shared by augmentation and inference.

mod cache;
pub mod mock;
mod openai;
mod retry;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheKey, CacheStats, ResponseCache};
pub use openai::{OpenAiChat, OpenAiEmbeddings, OpenAiSettings};
pub use retry::{retry, RetryPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// Decoding parameters sent with every chat request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 512,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub params: DecodingParams,
}

impl ChatRequest {
    /// A `[system, user]` request.
    pub fn new(system: &str, user: &str, params: DecodingParams) -> Self {
        Self {
            messages: vec![
                ChatMessage {
                    role: Role::System,
                    content: system.to_string(),
                },
                ChatMessage {
                    role: Role::User,
                    content: user.to_string(),
                },
            ],
            params,
        }
    }

    pub fn system(&self) -> Option<&str> {
        self.message(Role::System)
    }

    pub fn user(&self) -> Option<&str> {
        self.message(Role::User)
    }

    fn message(&self, role: Role) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.role == role)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("service returned HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("unexpected response payload: {0}")]
    Protocol(String),
    #[error("no JSON object in response: {0}")]
    Parse(String),
    #[error("response is missing or has an invalid `{0}` field")]
    Schema(String),
    #[error("cache error: {0}")]
    Cache(String),
}

impl LlmError {
    /// Transport errors, HTTP 429/5xx and unparseable responses are retried.
    pub fn is_retryable(&self) -> bool {
        match self {
            LlmError::Transport(_) | LlmError::Parse(_) => true,
            LlmError::Status { code, .. } => *code == 429 || (500..600).contains(code),
            _ => false,
        }
    }
}

/// An OpenAI-compatible chat-completions endpoint.
pub trait ChatModel: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

impl<T: ChatModel + ?Sized> ChatModel for std::sync::Arc<T> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}

/// A parsed model answer plus where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion<T> {
    pub value: T,
    pub raw: String,
    pub cached: bool,
    /// Service calls made for this completion (0 on a cache hit).
    pub attempts: usize,
}

/// Cache-first, retrying chat completion with response validation.
///
/// A raw response is only cached once `parse` accepts it, so a warm cache
/// never replays a response that failed validation.
pub struct Generator<'a> {
    pub model: &'a dyn ChatModel,
    pub cache: &'a ResponseCache,
    pub retry: RetryPolicy,
    pub params: DecodingParams,
}

impl<'a> Generator<'a> {
    pub fn new(model: &'a dyn ChatModel, cache: &'a ResponseCache) -> Self {
        Self {
            model,
            cache,
            retry: RetryPolicy::default(),
            params: DecodingParams::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_params(mut self, params: DecodingParams) -> Self {
        self.params = params;
        self
    }

    pub fn generate<T, F>(&self, system: &str, user: &str, parse: F) -> Result<Completion<T>, LlmError>
    where
        F: Fn(&str) -> Result<T, LlmError>,
    {
        let key = CacheKey::for_prompt(self.model.model_id(), system, user);
        if let Some(raw) = self.cache.get(&key) {
            if let Ok(value) = parse(&raw) {
                return Ok(Completion {
                    value,
                    raw,
                    cached: true,
                    attempts: 0,
                });
            }
        }
        let request = ChatRequest::new(system, user, self.params);
        let mut attempts = 0;
        let (value, raw) = retry(&self.retry, || {
            attempts += 1;
            let raw = self.model.complete(&request)?;
            let value = parse(&raw)?;
            Ok((value, raw))
        })?;
        self.cache.put(&key, self.model.model_id(), &raw)?;
        Ok(Completion {
            value,
            raw,
            cached: false,
            attempts,
        })
    }
}
