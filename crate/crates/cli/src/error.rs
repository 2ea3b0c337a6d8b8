use std::fmt;

use serde_json::json;

use claimnorm::augment::AugmentError;
use claimnorm::cleaning::CleaningError;
use claimnorm::corpus::CorpusError;
use claimnorm::inference::InferenceError;
use claimnorm::llm::LlmError;
use claimnorm::metrics::EvaluationError;
use claimnorm::retrieval::RetrievalError;

/// Failure class, which decides the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Invalid configuration or arguments. Exit code 2.
    Config,
    /// Missing or malformed input data. Exit code 3.
    Data,
    /// The LLM or embedding service failed. Exit code 4.
    Upstream,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Upstream => 4,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Data => "data",
            ErrorKind::Upstream => "upstream",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub stage: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Config, stage: None, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Data, stage: None, message: message.into() }
    }

    pub fn upstream(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Upstream, stage: None, message: message.into() }
    }

    pub fn in_stage(mut self, stage: &str) -> Self {
        self.stage.get_or_insert_with(|| stage.to_string());
        self
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// The machine-readable form written to stderr.
    pub fn to_json(&self) -> String {
        json!({
            "error": {
                "kind": self.kind.as_str(),
                "stage": self.stage,
                "message": self.message,
                "exit_code": self.exit_code(),
            }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.stage {
            Some(stage) => write!(f, "{stage}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::UnknownLanguage(_) | CorpusError::UnknownSplit(_) | CorpusError::UnknownFormat(_) => {
                CliError::config(e.to_string())
            }
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<CleaningError> for CliError {
    fn from(e: CleaningError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Cache(_) => CliError::data(e.to_string()),
            _ => CliError::upstream(e.to_string()),
        }
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::BatchesFailed { .. } => CliError::upstream(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<AugmentError> for CliError {
    fn from(e: AugmentError) -> Self {
        match e {
            AugmentError::MissingClaim(_) => CliError::data(e.to_string()),
            AugmentError::TooManyFailures { .. } => CliError::upstream(e.to_string()),
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::NoShotStore => CliError::config(e.to_string()),
            InferenceError::TooManyFailures { .. } => CliError::upstream(e.to_string()),
        }
    }
}

impl From<EvaluationError> for CliError {
    fn from(e: EvaluationError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}
