//! Intra-post deduplication and recall-based pair filtering.
//!
//! Posts scraped from social media often repeat the same sentence several
//! times. [`dedup_post`] drops every sentence whose normalized MD5
//! fingerprint was already seen earlier in the same post.
//!
//! Pairs whose gold claim shares few tokens with the post are then removed by
//! [`filter_pairs`]: the claim's unique tokens are checked against the post's
//! unique tokens and a pair survives only when that recall is strictly above
//! the threshold (0.4 by default).

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use md5::{Digest, Md5};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::PostClaimPair;
use crate::text::edge_punctuation;

/// Default recall threshold for [`filter_pairs`].
pub const DEFAULT_RECALL_THRESHOLD: f64 = 0.4;

const SENTENCE_TERMINATORS: &[char] = &['.', '!', '?', '።', '。', '؟', '।'];

/// Split text into sentence-like segments.
///
/// A segment ends at a sentence terminator that is followed by whitespace or
/// by the end of the text, and at every line break. Segments are trimmed and
/// empty ones are dropped.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let mut segments = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let next = chars.peek().map(|&(_, n)| n);
        let end = if c == '\n' || c == '\r' {
            Some(i)
        } else if SENTENCE_TERMINATORS.contains(&c) && next.map_or(true, char::is_whitespace) {
            Some(i + c.len_utf8())
        } else {
            None
        };
        if let Some(end) = end {
            push_trimmed(&mut segments, &text[start..end]);
            start = i + c.len_utf8();
        }
    }
    push_trimmed(&mut segments, &text[start..]);
    segments
}

fn push_trimmed(segments: &mut Vec<String>, piece: &str) {
    let piece = piece.trim();
    if !piece.is_empty() {
        segments.push(piece.to_string());
    }
}

/// 128-bit MD5 digest of a normalized segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(pub [u8; 16]);

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

/// NFC, lowercase, whitespace runs collapsed to one space, trimmed.
pub fn normalize_segment(segment: &str) -> String {
    let lowered: String = segment.nfc().collect::<String>().to_lowercase();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn fingerprint(segment: &str) -> Fingerprint {
    let digest = Md5::digest(normalize_segment(segment).as_bytes());
    Fingerprint(digest.into())
}

/// Remove repeated sentences, keeping first occurrences in order.
///
/// Surviving segments are joined with a single space. A segment that was
/// closed by a line break rather than a terminator keeps a newline after it,
/// so that segmenting the output again yields the same segments.
pub fn dedup_post(text: &str) -> String {
    let mut seen = HashSet::new();
    let mut out = String::with_capacity(text.len());
    for segment in segment_sentences(text) {
        if !seen.insert(fingerprint(&segment)) {
            continue;
        }
        if let Some(prev) = out.chars().last() {
            out.push(if SENTENCE_TERMINATORS.contains(&prev) { ' ' } else { '\n' });
        }
        out.push_str(&segment);
    }
    out
}

/// Unique lowercase tokens of a text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSet(BTreeSet<String>);

impl TokenSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn intersection_len(&self, other: &TokenSet) -> usize {
        self.0.intersection(&other.0).count()
    }
}

impl<'a> FromIterator<&'a str> for TokenSet {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        TokenSet(
            iter.into_iter()
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect(),
        )
    }
}

/// Lowercase, whitespace-split, strip edge punctuation, drop empties, dedupe.
///
/// Inner punctuation survives, so `PK-320` stays a single token `pk-320`.
pub fn tokenize(text: &str) -> TokenSet {
    let lowered = text.to_lowercase();
    let re = edge_punctuation();
    let set = lowered
        .split_whitespace()
        .map(|raw| re.replace_all(raw, "").into_owned())
        .filter(|t| !t.is_empty())
        .collect();
    TokenSet(set)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CleaningError {
    #[error("claim has no tokens, recall is undefined")]
    EmptyClaim,
    #[error("pair `{id}`: {source}")]
    Pair {
        id: String,
        #[source]
        source: Box<CleaningError>,
    },
    #[error("pair `{0}` has no claim to filter against")]
    MissingClaim(String),
}

/// Fraction of the claim's unique tokens that also occur in the post.
pub fn token_recall(post_text: &str, claim_text: &str) -> Result<f64, CleaningError> {
    let claim = tokenize(claim_text);
    if claim.is_empty() {
        return Err(CleaningError::EmptyClaim);
    }
    let post = tokenize(post_text);
    Ok(claim.intersection_len(&post) as f64 / claim.len() as f64)
}

/// Outcome of the recall check for one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterDecision {
    pub pair: PostClaimPair,
    pub recall: f64,
    pub retained: bool,
    pub threshold: f64,
}

/// One line of the filter report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReportRecord {
    pub id: String,
    pub recall: f64,
    pub retained: bool,
    pub threshold: f64,
}

impl FilterDecision {
    pub fn report_record(&self) -> FilterReportRecord {
        FilterReportRecord {
            id: self.pair.post.id.clone(),
            recall: (self.recall * 10_000.0).round() / 10_000.0,
            retained: self.retained,
            threshold: self.threshold,
        }
    }
}

/// Result of [`filter_pairs`].
#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    /// Pairs above the threshold, with `recall_score` filled in.
    pub retained: Vec<PostClaimPair>,
    /// Pairs at or below the threshold.
    pub removed: Vec<FilterDecision>,
    /// Every decision in input order.
    pub decisions: Vec<FilterDecision>,
}

/// Keep pairs whose token recall (on the deduplicated post) is strictly
/// above `threshold`.
pub fn filter_pairs(
    pairs: &[PostClaimPair],
    threshold: f64,
) -> Result<FilterOutcome, CleaningError> {
    let decisions: Vec<FilterDecision> = pairs
        .par_iter()
        .map(|pair| {
            let claim = pair
                .claim
                .as_deref()
                .ok_or_else(|| CleaningError::MissingClaim(pair.post.id.clone()))?;
            let recall =
                token_recall(&dedup_post(&pair.post.text), claim).map_err(|e| {
                    CleaningError::Pair {
                        id: pair.post.id.clone(),
                        source: Box::new(e),
                    }
                })?;
            let mut pair = pair.clone();
            pair.recall_score = Some(recall);
            Ok(FilterDecision {
                pair,
                recall,
                retained: recall > threshold,
                threshold,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut outcome = FilterOutcome::default();
    for decision in &decisions {
        if decision.retained {
            outcome.retained.push(decision.pair.clone());
        } else {
            outcome.removed.push(decision.clone());
        }
    }
    outcome.decisions = decisions;
    Ok(outcome)
}
