//! Blocking clients for the OpenAI-compatible wire protocol.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{ChatModel, ChatRequest, LlmError};
use crate::retrieval::EmbeddingClient;

const DEFAULT_BASE_URL: &str = "https://api.openai.com";

/// Connection settings shared by the chat and embedding clients.
#[derive(Debug, Clone)]
pub struct OpenAiSettings {
    /// Either the service root (`https://host`) or the versioned root
    /// (`https://host/v1`).
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl Default for OpenAiSettings {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_BASE_URL.to_string(),
            api_key: None,
            timeout: Duration::from_secs(120),
        }
    }
}

impl OpenAiSettings {
    fn endpoint(&self, path: &str) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/v1") {
            format!("{base}/{path}")
        } else {
            format!("{base}/v1/{path}")
        }
    }

    fn agent(&self) -> ureq::Agent {
        ureq::AgentBuilder::new().timeout(self.timeout).build()
    }

    fn post(&self, agent: &ureq::Agent, url: &str, body: serde_json::Value) -> Result<serde_json::Value, LlmError> {
        let mut request = agent.post(url).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        match request.send_json(body) {
            Ok(response) => response
                .into_json()
                .map_err(|e| LlmError::Protocol(e.to_string())),
            Err(ureq::Error::Status(code, response)) => Err(LlmError::Status {
                code,
                body: response.into_string().unwrap_or_default(),
            }),
            Err(ureq::Error::Transport(t)) => Err(LlmError::Transport(t.to_string())),
        }
    }
}

/// `POST /v1/chat/completions`.
pub struct OpenAiChat {
    settings: OpenAiSettings,
    model: String,
    agent: ureq::Agent,
}

impl OpenAiChat {
    pub fn new(settings: OpenAiSettings, model: impl Into<String>) -> Self {
        let agent = settings.agent();
        Self {
            settings,
            model: model.into(),
            agent,
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

impl ChatModel for OpenAiChat {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let mut body = json!({
            "model": self.model,
            "messages": request.messages,
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_tokens,
        });
        if let Some(seed) = request.params.seed {
            body["seed"] = json!(seed);
        }
        let value = self
            .settings
            .post(&self.agent, &self.settings.endpoint("chat/completions"), body)?;
        let response: ChatResponse =
            serde_json::from_value(value).map_err(|e| LlmError::Protocol(e.to_string()))?;
        response
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Protocol("response has no message content".into()))
    }
}

/// `POST /v1/embeddings`.
pub struct OpenAiEmbeddings {
    settings: OpenAiSettings,
    model: String,
    dimensions: Option<usize>,
    agent: ureq::Agent,
}

impl OpenAiEmbeddings {
    pub fn new(settings: OpenAiSettings, model: impl Into<String>) -> Self {
        let agent = settings.agent();
        Self {
            settings,
            model: model.into(),
            dimensions: None,
            agent,
        }
    }

    /// Ask the service for shortened vectors.
    pub fn with_dimensions(mut self, dimensions: usize) -> Self {
        self.dimensions = Some(dimensions);
        self
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl EmbeddingClient for OpenAiEmbeddings {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        let mut body = json!({ "model": self.model, "input": texts });
        if let Some(d) = self.dimensions {
            body["dimensions"] = json!(d);
        }
        let value = self
            .settings
            .post(&self.agent, &self.settings.endpoint("embeddings"), body)?;
        let response: EmbeddingResponse =
            serde_json::from_value(value).map_err(|e| LlmError::Protocol(e.to_string()))?;
        if response.data.len() != texts.len() {
            return Err(LlmError::Protocol(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                response.data.len()
            )));
        }
        let mut data = response.data;
        if data.iter().all(|d| d.index.is_some()) {
            data.sort_by_key(|d| d.index);
        }
        Ok(data.into_iter().map(|d| d.embedding).collect())
    }
}
