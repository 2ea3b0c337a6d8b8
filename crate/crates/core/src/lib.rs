//! Claim normalization toolkit.
//!
//! Turns noisy multilingual social-media posts into short, checkable claims.
//! The crate covers every stage of that pipeline:
//!
//! - [`corpus`]: loading and describing post/claim datasets (CSV or JSONL).
//! - [`cleaning`]: intra-post sentence deduplication and token-recall filtering.
//! - [`augment`]: 5W1H reasoning prompts, response parsing and LLM augmentation.
//! - [`retrieval`]: embeddings, an exact cosine index and superset replacement.
//! - [`inference`]: retrieval-augmented few-shot prompting and batch prediction.
//! - [`metrics`]: BLEU-4, ROUGE-1/2/L and METEOR, plus run-level reports.
//!
//! External services (chat completions and embeddings) sit behind the
//! [`llm::ChatModel`] and [`retrieval::EmbeddingClient`] traits, so every
//! stage can run against deterministic mocks.
//!
//! The guide under `book/` walks through each stage; its code listings are
//! compiled and run as doctests of this crate.

pub mod augment;
pub mod cleaning;
pub mod corpus;
pub mod inference;
pub mod llm;
pub mod metrics;
pub mod pool;
pub mod retrieval;
mod text;

pub use augment::{FiveW1H, PromptBundle, TrainingExample};
pub use corpus::{Post, PostClaimPair, Split};
pub use inference::Prediction;
pub use metrics::MetricReport;
pub use retrieval::{EmbeddingVector, VectorIndex};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/corpus.md")]
    pub struct Corpus;
    #[doc = include_str!("../../../book/src/cleaning.md")]
    pub struct Cleaning;
    #[doc = include_str!("../../../book/src/augmentation.md")]
    pub struct Augmentation;
    #[doc = include_str!("../../../book/src/retrieval.md")]
    pub struct Retrieval;
    #[doc = include_str!("../../../book/src/inference.md")]
    pub struct Inference;
    #[doc = include_str!("../../../book/src/metrics.md")]
    pub struct Metrics;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
