//! Deterministic stand-ins for the external services.
//!
//! [`HeuristicChat`] and [`HashingEmbedder`] back the CLI's `--mock-llm`
//! mode; [`FnChat`] and [`FnEmbedder`] wrap closures for tests.

use serde_json::json;
use sha2::{Digest, Sha256};

use super::{ChatModel, ChatRequest, LlmError};
use crate::retrieval::EmbeddingClient;

/// A chat model backed by a closure.
pub struct FnChat<F> {
    model: String,
    f: F,
}

impl<F> FnChat<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    pub fn new(model: impl Into<String>, f: F) -> Self {
        Self {
            model: model.into(),
            f,
        }
    }
}

impl<F> ChatModel for FnChat<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (self.f)(request)
    }
}

/// An embedding client backed by a closure.
pub struct FnEmbedder<F> {
    model: String,
    f: F,
}

impl<F> FnEmbedder<F>
where
    F: Fn(&[String]) -> Result<Vec<Vec<f64>>, LlmError> + Send + Sync,
{
    pub fn new(model: impl Into<String>, f: F) -> Self {
        Self {
            model: model.into(),
            f,
        }
    }
}

impl<F> EmbeddingClient for FnEmbedder<F>
where
    F: Fn(&[String]) -> Result<Vec<Vec<f64>>, LlmError> + Send + Sync,
{
    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        (self.f)(texts)
    }
}

/// The text following the last `Post: ` marker in a prompt, up to the next
/// blank line.
pub fn target_post(user_prompt: &str) -> Option<&str> {
    let start = user_prompt.rfind("Post: ")? + "Post: ".len();
    let rest = &user_prompt[start..];
    Some(rest.split("\n\n").next().unwrap_or(rest).trim())
}

/// Answers every prompt from the target post alone: the claim is the post's
/// first fifteen words. Asks for 5W1H keys are detected from the system
/// prompt and filled with simple slices of the post.
pub struct HeuristicChat {
    model: String,
}

impl HeuristicChat {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
        }
    }
}

impl Default for HeuristicChat {
    fn default() -> Self {
        Self::new("mock-heuristic")
    }
}

impl ChatModel for HeuristicChat {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let post = request
            .user()
            .and_then(target_post)
            .ok_or_else(|| LlmError::Protocol("prompt has no `Post:` line".into()))?;
        let words: Vec<&str> = post.split_whitespace().collect();
        let take = |n: usize| words[..n.min(words.len())].join(" ");
        let claim = take(15);
        let wants_5w1h = request.system().is_some_and(|s| s.contains("\"what\""));
        let body = if wants_5w1h {
            json!({
                "what": take(5),
                "who": "",
                "where": "",
                "when": "",
                "how": "",
                "why": "",
                "claim": claim,
            })
        } else {
            json!({ "claim": claim })
        };
        Ok(body.to_string())
    }
}

/// Feature-hashing bag-of-words embedder: each lowercase alphanumeric token
/// adds ±1 to a bucket chosen by its SHA-256, then the vector is normalized.
/// Texts sharing words get high cosine similarity.
pub struct HashingEmbedder {
    model: String,
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        Self {
            model: format!("mock-hashing-{dim}"),
            dim: dim.max(1),
        }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let lowered = text.to_lowercase();
        for token in lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let digest = Sha256::digest(token.as_bytes());
            let mut bucket = [0u8; 8];
            bucket.copy_from_slice(&digest[..8]);
            let index = (u64::from_le_bytes(bucket) % self.dim as u64) as usize;
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[index] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            v[0] = 1.0;
        } else {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl EmbeddingClient for HashingEmbedder {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}
