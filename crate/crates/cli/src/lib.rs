//! Command-line driver for the claim normalization pipeline.
//!
//! Each subcommand is one stage: it reads files, calls into [`claimnorm`],
//! writes files and appends a [`manifest::RunManifest`] to
//! `manifests.jsonl` in the working directory. Stages share nothing but
//! files, so any stage can be rerun on its own.
//!
//! [`run`] is the whole program minus process exit; tests call it directly
//! with [`Services`] of their choosing.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use claimnorm::inference::PromptStyle;
use claimnorm::llm::mock::{HashingEmbedder, HeuristicChat};
use claimnorm::llm::{ChatModel, OpenAiChat, OpenAiEmbeddings, OpenAiSettings, ResponseCache};
use claimnorm::retrieval::EmbeddingClient;

pub use config::{Overrides, PipelineConfig};
pub use error::{CliError, ErrorKind};

/// Environment variables holding the endpoint credentials, first match wins.
pub const API_KEY_VARS: [&str; 2] = ["CLAIMNORM_API_KEY", "OPENAI_API_KEY"];
pub const BASE_URL_VARS: [&str; 2] = ["CLAIMNORM_BASE_URL", "OPENAI_BASE_URL"];

#[derive(Debug, Parser)]
#[command(name = "claimnorm", version, about = "Turn noisy social-media posts into normalized claims")]
pub struct Cli {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Language code of the data (overrides the config).
    #[arg(long, global = true)]
    pub language: Option<String>,
    /// Token-recall threshold for `filter` (overrides the config).
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Number of few-shot examples (overrides the config).
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Use the built-in deterministic chat model and embedder.
    #[arg(long, global = true)]
    pub mock_llm: bool,
    /// Where manifests, the lock file and the cache live.
    #[arg(long, global = true, default_value = ".")]
    pub workdir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StyleArg {
    Plain,
    ZeroShot,
    FewShot,
}

impl From<StyleArg> for PromptStyle {
    fn from(s: StyleArg) -> Self {
        match s {
            StyleArg::Plain => PromptStyle::Plain,
            StyleArg::ZeroShot => PromptStyle::ZeroShot,
            StyleArg::FewShot => PromptStyle::FewShot,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record count and average post/claim lengths.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Remove repeated sentences inside each post.
    Clean {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Drop pairs whose claim tokens are poorly covered by the post.
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Per-pair recall decisions as JSONL.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Attach 5W1H reasoning to every pair.
    Augment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        dead_letters: Option<PathBuf>,
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Embed training posts and build the similarity index.
    Index {
        /// Training examples JSONL from `augment`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Also write the examples with subset posts replaced by supersets.
        #[arg(long)]
        replace_subsets: Option<PathBuf>,
    },
    /// Predict claims for unseen posts.
    Infer {
        #[arg(long)]
        input: PathBuf,
        /// Predictions CSV; a `.jsonl` twin with full detail is written next to it.
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        examples: Option<PathBuf>,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "few-shot")]
        style: StyleArg,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Score predictions against gold claims.
    Evaluate {
        /// Predictions as CSV or JSONL.
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        references: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Precomputed per-pair BERTScore values (`id`, `score`).
        #[arg(long)]
        bertscore: Option<PathBuf>,
        #[arg(long, default_value = "dev")]
        split: String,
    },
    /// Compare the plain, 5W1H zero-shot and 5W1H few-shot configurations.
    Ablate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "dev")]
        split: String,
    },
}

/// The external services a run talks to.
#[derive(Clone)]
pub struct Services {
    pub chat: Arc<dyn ChatModel>,
    pub embeddings: Arc<dyn EmbeddingClient>,
}

impl Services {
    pub fn mock(config: &PipelineConfig) -> Self {
        Self {
            chat: Arc::new(HeuristicChat::default()),
            embeddings: Arc::new(HashingEmbedder::new(config.embedding_dim)),
        }
    }

    /// OpenAI-compatible clients configured from the environment.
    pub fn from_env(config: &PipelineConfig) -> Result<Self, CliError> {
        let first = |vars: &[&str]| vars.iter().find_map(|v| std::env::var(v).ok().filter(|s| !s.is_empty()));
        let api_key = first(&API_KEY_VARS);
        let base_url = first(&BASE_URL_VARS);
        if api_key.is_none() && base_url.is_none() {
            return Err(CliError::config(format!(
                "no endpoint configured: set {} (and optionally {}) or pass --mock-llm",
                API_KEY_VARS[0], BASE_URL_VARS[0]
            )));
        }
        let mut settings = OpenAiSettings { api_key, ..Default::default() };
        if let Some(url) = base_url {
            settings.base_url = url;
        }
        Ok(Self {
            chat: Arc::new(OpenAiChat::new(settings.clone(), &config.llm_model)),
            embeddings: Arc::new(
                OpenAiEmbeddings::new(settings, &config.embedding_model).with_dimensions(config.embedding_dim),
            ),
        })
    }
}

/// Resolved configuration plus how to reach the services.
pub struct Context {
    pub config: PipelineConfig,
    pub workdir: PathBuf,
    pub mock: bool,
    injected: Option<Services>,
}

impl Context {
    pub fn new(config: PipelineConfig, workdir: PathBuf, mock: bool, injected: Option<Services>) -> Self {
        Self { config, workdir, mock, injected }
    }

    pub fn services(&self) -> Result<Services, CliError> {
        match (&self.injected, self.mock) {
            (Some(s), _) => Ok(s.clone()),
            (None, true) => Ok(Services::mock(&self.config)),
            (None, false) => Services::from_env(&self.config),
        }
    }

    pub fn cache(&self) -> Result<ResponseCache, CliError> {
        ResponseCache::on_disk(self.config.cache_path(&self.workdir)).map_err(CliError::from)
    }
}

/// What a successful command prints.
#[derive(Debug, Clone)]
pub struct Output {
    pub summary: serde_json::Value,
    /// Human-readable table, printed instead of the summary when present.
    pub table: Option<String>,
}

/// Run one command. `services` replaces both the mock and the live
/// clients when given.
pub fn run(cli: &Cli, services: Option<Services>) -> Result<Output, CliError> {
    let overrides = Overrides {
        language: cli.language.clone(),
        threshold: cli.threshold,
        k: cli.k,
    };
    let config = PipelineConfig::load(cli.config.as_deref(), &overrides)?;
    let ctx = Context::new(config, cli.workdir.clone(), cli.mock_llm, services);
    commands::dispatch(&ctx, &cli.command)
}
