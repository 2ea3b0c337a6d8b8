//! 5W1H reasoning augmentation of training pairs.
//!
//! Every cleaned pair is sent through the 5W1H prompt. The model's six
//! reasoning fields are kept as the reasoning trace while the gold claim
//! stays the supervision target.

mod parse;
mod prompt;

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{extract_json_object, parse_5w1h_response, parse_claim_response, FiveW1H, KEYS};
pub use prompt::{
    build_5w1h_messages, build_plain_messages, ExpectedFormat, PromptBundle, PLAIN_SYSTEM_PROMPT,
    PLAIN_USER_TEMPLATE, SYSTEM_PROMPT, USER_TEMPLATE,
};
pub(crate) use prompt::fill;

use crate::corpus::{Post, PostClaimPair, Split};
use crate::llm::Generator;
use crate::pool::{map_ordered, DEFAULT_CONCURRENCY};

/// Where a training example's reasoning came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Llm,
    Cached,
    Manual,
}

/// A filtered pair with its 5W1H reasoning attached.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub pair: PostClaimPair,
    pub reasoning: FiveW1H,
    pub provenance: Provenance,
}

impl TrainingExample {
    pub fn id(&self) -> &str {
        &self.pair.post.id
    }

    pub fn post_text(&self) -> &str {
        &self.pair.post.text
    }
}

/// A pair whose augmentation failed after retries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadLetter {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentOptions {
    pub concurrency: usize,
    /// Run fails when more than this fraction of pairs dead-letter.
    pub max_dead_letter_rate: f64,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            concurrency: DEFAULT_CONCURRENCY,
            max_dead_letter_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugmentOutcome {
    pub examples: Vec<TrainingExample>,
    pub dead_letters: Vec<DeadLetter>,
    pub cache_hits: usize,
    pub llm_calls: usize,
}

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("pair `{0}` has no gold claim")]
    MissingClaim(String),
    #[error("{failed} of {total} pairs failed augmentation, above the {limit:.0}% ceiling")]
    TooManyFailures {
        failed: usize,
        total: usize,
        limit: f64,
        outcome: Box<AugmentOutcome>,
    },
}

/// Attach 5W1H reasoning to every pair, in input order.
pub fn augment_pairs(
    pairs: &[PostClaimPair],
    generator: &Generator<'_>,
    options: &AugmentOptions,
) -> Result<AugmentOutcome, AugmentError> {
    if let Some(p) = pairs.iter().find(|p| p.claim.is_none()) {
        return Err(AugmentError::MissingClaim(p.post.id.clone()));
    }
    let results = map_ordered(pairs, options.concurrency, |_, pair| {
        let bundle = build_5w1h_messages(&pair.post.text);
        generator.generate(&bundle.system, &bundle.user, parse_5w1h_response)
    });

    let mut outcome = AugmentOutcome::default();
    for (pair, result) in pairs.iter().zip(results) {
        match result {
            Ok(completion) => {
                let mut reasoning = completion.value;
                if let Some(n) = reasoning.claim_length_warning() {
                    tracing::warn!(id = %pair.post.id, words = n, "generated claim outside 10-15 words");
                }
                reasoning.claim = pair.claim.clone().unwrap_or_default();
                if completion.cached {
                    outcome.cache_hits += 1;
                }
                outcome.llm_calls += completion.attempts;
                outcome.examples.push(TrainingExample {
                    pair: pair.clone(),
                    reasoning,
                    provenance: if completion.cached {
                        Provenance::Cached
                    } else {
                        Provenance::Llm
                    },
                });
            }
            Err(e) => {
                tracing::warn!(id = %pair.post.id, error = %e, "dead letter");
                outcome.dead_letters.push(DeadLetter {
                    id: pair.post.id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }

    let total = pairs.len();
    let failed = outcome.dead_letters.len();
    if total > 0 && failed as f64 / total as f64 > options.max_dead_letter_rate {
        return Err(AugmentError::TooManyFailures {
            failed,
            total,
            limit: options.max_dead_letter_rate * 100.0,
            outcome: Box::new(outcome),
        });
    }
    Ok(outcome)
}

/// JSONL line of a training example.
#[derive(Debug, Serialize, Deserialize)]
struct ExampleRecord {
    id: String,
    language: String,
    split: Split,
    post: String,
    claim: String,
    #[serde(default)]
    recall_score: Option<f64>,
    reasoning: FiveW1H,
    provenance: Provenance,
}

pub fn write_examples_jsonl<W: Write>(examples: &[TrainingExample], mut w: W) -> io::Result<()> {
    for ex in examples {
        let record = ExampleRecord {
            id: ex.pair.post.id.clone(),
            language: ex.pair.post.language.clone(),
            split: ex.pair.post.split,
            post: ex.pair.post.text.clone(),
            claim: ex.pair.claim.clone().unwrap_or_else(|| ex.reasoning.claim.clone()),
            recall_score: ex.pair.recall_score,
            reasoning: ex.reasoning.clone(),
            provenance: ex.provenance,
        };
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_examples_jsonl<R: BufRead>(r: R) -> io::Result<Vec<TrainingExample>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ExampleRecord = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        if record.reasoning.claim.trim().is_empty() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("line {}: reasoning claim is empty", i + 1),
            ));
        }
        out.push(TrainingExample {
            pair: PostClaimPair {
                post: Post {
                    id: record.id,
                    language: record.language,
                    text: record.post,
                    split: record.split,
                },
                claim: Some(record.claim),
                recall_score: record.recall_score,
            },
            reasoning: record.reasoning,
            provenance: record.provenance,
        });
    }
    Ok(out)
}
