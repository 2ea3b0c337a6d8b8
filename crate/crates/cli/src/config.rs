//! Pipeline configuration: defaults, TOML file, command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use claimnorm::cleaning::DEFAULT_RECALL_THRESHOLD;
use claimnorm::corpus::LanguageRegistry;
use claimnorm::inference::{ShotOrder, MAX_SHOTS};
use claimnorm::llm::{DecodingParams, RetryPolicy};
use claimnorm::pool::DEFAULT_CONCURRENCY;
use claimnorm::retrieval::{SupersetRule, DEFAULT_BATCH_SIZE, DEFAULT_EMBEDDING_DIM, DEFAULT_EMBEDDING_MODEL, DEFAULT_K};

use crate::error::CliError;

pub const DEFAULT_LLM_MODEL: &str = "Qwen/Qwen3-14B";

/// Everything a stage needs besides its input and output paths.
///
/// Credentials are deliberately absent: the API key and base URL are read
/// from the environment only, so they never reach a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub language: String,
    /// Extra language codes accepted on top of the task languages.
    pub extra_languages: Vec<String>,
    pub threshold: f64,
    pub k: usize,
    pub embedding_model: String,
    pub embedding_dim: usize,
    pub embedding_batch_size: usize,
    pub llm_model: String,
    pub decoding: DecodingParams,
    pub retry: RetryPolicy,
    pub concurrency: usize,
    pub max_dead_letter_rate: f64,
    /// Relative paths are resolved against the working directory.
    pub cache_dir: PathBuf,
    pub superset: SupersetRule,
    pub shot_order: ShotOrder,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            language: "eng".into(),
            extra_languages: Vec::new(),
            threshold: DEFAULT_RECALL_THRESHOLD,
            k: DEFAULT_K,
            embedding_model: DEFAULT_EMBEDDING_MODEL.into(),
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            embedding_batch_size: DEFAULT_BATCH_SIZE,
            llm_model: DEFAULT_LLM_MODEL.into(),
            decoding: DecodingParams::default(),
            retry: RetryPolicy::default(),
            concurrency: DEFAULT_CONCURRENCY,
            max_dead_letter_rate: 0.1,
            cache_dir: PathBuf::from("cache"),
            superset: SupersetRule::default(),
            shot_order: ShotOrder::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub language: Option<String>,
    pub threshold: Option<f64>,
    pub k: Option<usize>,
}

fn unit_interval(name: &str, v: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        // The default rendering quotes the offending line, which may hold a
        // secret; report only the message and the line number.
        toml::from_str(text).map_err(|e: toml::de::Error| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1);
            let at = line.map(|l| format!(" (line {l})")).unwrap_or_default();
            CliError::config(format!("config{at}: {}", e.message()))
        })
    }

    /// Defaults, then the optional file, then the overrides; validated.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::config(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        if let Some(l) = &overrides.language {
            config.language = l.clone();
        }
        if let Some(t) = overrides.threshold {
            config.threshold = t;
        }
        if let Some(k) = overrides.k {
            config.k = k;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        unit_interval("threshold", self.threshold)?;
        unit_interval("max_dead_letter_rate", self.max_dead_letter_rate)?;
        unit_interval("superset.min_similarity", self.superset.min_similarity)?;
        unit_interval("superset.min_coverage", self.superset.min_coverage)?;
        if !(1..=MAX_SHOTS).contains(&self.k) {
            return Err(CliError::config(format!("k must lie in 1..={MAX_SHOTS}, got {}", self.k)));
        }
        for (name, v) in [
            ("embedding_dim", self.embedding_dim),
            ("embedding_batch_size", self.embedding_batch_size),
            ("concurrency", self.concurrency),
        ] {
            if v == 0 {
                return Err(CliError::config(format!("{name} must be at least 1")));
            }
        }
        if self.decoding.max_tokens == 0 {
            return Err(CliError::config("decoding.max_tokens must be at least 1"));
        }
        if !self.decoding.temperature.is_finite() || self.decoding.temperature < 0.0 {
            return Err(CliError::config("decoding.temperature must be a non-negative number"));
        }
        if self.retry.max_attempts == 0 {
            return Err(CliError::config("retry.max_attempts must be at least 1"));
        }
        self.languages().check(&self.language)?;
        Ok(())
    }

    pub fn languages(&self) -> LanguageRegistry {
        let mut registry = LanguageRegistry::default();
        for code in &self.extra_languages {
            registry.register(code);
        }
        registry
    }

    pub fn cache_path(&self, workdir: &Path) -> PathBuf {
        workdir.join(&self.cache_dir)
    }
}
