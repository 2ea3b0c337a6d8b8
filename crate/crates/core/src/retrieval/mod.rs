//! Dense retrieval over training posts.
//!
//! Posts are embedded through an OpenAI-compatible embeddings endpoint
//! ([`Embedder`]), stored in an exact cosine index ([`VectorIndex`]) and
//! queried exhaustively. The same index drives subset-to-superset replacement
//! of training posts ([`replace_subsets`]).

mod embed;
mod index;
mod superset;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::LlmError;

pub use embed::{Embedder, EmbedderStats, DEFAULT_BATCH_SIZE};
pub use index::{VectorIndex, INDEX_MAGIC, INDEX_VERSION};
pub use superset::{detect_superset, replace_subsets, Replacement, SupersetRule};

/// Default embedding model and dimension.
pub const DEFAULT_EMBEDDING_MODEL: &str = "text-embedding-3-small";
pub const DEFAULT_EMBEDDING_DIM: usize = 1536;

/// Default number of neighbours retrieved per query.
pub const DEFAULT_K: usize = 5;

/// An OpenAI-compatible embeddings endpoint.
pub trait EmbeddingClient: Send + Sync {
    fn model_id(&self) -> &str;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError>;
}

impl<T: EmbeddingClient + ?Sized> EmbeddingClient for std::sync::Arc<T> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        (**self).embed(texts)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector has a non-finite component at position {0}")]
    NonFinite(usize),
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("duplicate id `{0}` in index")]
    DuplicateId(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("text at position {0} is empty")]
    EmptyText(usize),
    #[error("embedding batches {batches:?} failed: {error}")]
    BatchesFailed { batches: Vec<usize>, error: LlmError },
    #[error("malformed index file: {0}")]
    Format(String),
    #[error("index io: {0}")]
    Io(String),
}

/// A dense embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Reject vectors with NaN or infinite components.
    pub fn new(values: Vec<f64>) -> Result<Self, RetrievalError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(RetrievalError::NonFinite(i));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, RetrievalError> {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, RetrievalError> {
    if u.dim() != v.dim() {
        return Err(RetrievalError::DimensionMismatch {
            expected: u.dim(),
            found: v.dim(),
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(RetrievalError::ZeroNorm);
    }
    Ok((dot(&u.values, &v.values) / (nu * nv)).clamp(-1.0, 1.0))
}

/// One retrieved neighbour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub id: String,
    pub similarity: f64,
}
