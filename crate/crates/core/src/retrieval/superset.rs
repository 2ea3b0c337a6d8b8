//! Replacing short posts with longer posts that contain them.
//!
//! Post `b` is treated as a superset of post `a` when all three hold:
//!
//! 1. their embeddings have cosine similarity ≥ `min_similarity` (0.95),
//! 2. at least `min_coverage` (0.9) of `a`'s unique tokens occur in `b`,
//! 3. `b` has strictly more whitespace tokens than `a`.
//!
//! Both thresholds are configurable through [`SupersetRule`].

use serde::{Deserialize, Serialize};

use super::{VectorIndex, DEFAULT_K};
use crate::augment::TrainingExample;
use crate::cleaning::token_recall;
use crate::text::word_count;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupersetRule {
    pub min_similarity: f64,
    pub min_coverage: f64,
}

impl Default for SupersetRule {
    fn default() -> Self {
        Self {
            min_similarity: 0.95,
            min_coverage: 0.9,
        }
    }
}

impl SupersetRule {
    /// Whether `longer` covers `shorter` under this rule.
    pub fn covers(&self, shorter: &str, longer: &str, similarity: f64) -> bool {
        if similarity < self.min_similarity {
            return false;
        }
        if word_count(longer) <= word_count(shorter) {
            return false;
        }
        token_recall(longer, shorter).is_ok_and(|coverage| coverage >= self.min_coverage)
    }
}

/// Whether `b`'s post is a superset of `a`'s post.
pub fn detect_superset(
    a: &TrainingExample,
    b: &TrainingExample,
    sim: f64,
    rule: &SupersetRule,
) -> bool {
    rule.covers(a.post_text(), b.post_text(), sim)
}

/// One subset post replaced by its superset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replacement {
    pub subset_id: String,
    pub superset_id: String,
    pub similarity: f64,
}

/// Replace every post that has a superset among its top-5 neighbours with
/// the longest such superset's text. Claims and reasoning are untouched.
///
/// All checks run against the original texts, so the result does not depend
/// on processing order.
pub fn replace_subsets(
    examples: &[TrainingExample],
    index: &VectorIndex,
    rule: &SupersetRule,
) -> (Vec<TrainingExample>, Vec<Replacement>) {
    let by_id: std::collections::HashMap<&str, &TrainingExample> =
        examples.iter().map(|e| (e.id(), e)).collect();
    let mut out = examples.to_vec();
    let mut log = Vec::new();
    for (slot, example) in out.iter_mut().zip(examples) {
        let Some(query) = index.vector(example.id()) else {
            continue;
        };
        let Ok(neighbours) = index.top_k(&query, DEFAULT_K, Some(example.id())) else {
            continue;
        };
        let best = neighbours
            .iter()
            .filter_map(|n| by_id.get(n.id.as_str()).map(|b| (n, *b)))
            .filter(|(n, b)| detect_superset(example, b, n.similarity, rule))
            .max_by(|(na, a), (nb, b)| {
                word_count(a.post_text())
                    .cmp(&word_count(b.post_text()))
                    .then(na.similarity.total_cmp(&nb.similarity))
                    .then_with(|| nb.id.cmp(&na.id))
            });
        if let Some((n, superset)) = best {
            slot.pair.post.text = superset.post_text().to_string();
            log.push(Replacement {
                subset_id: example.id().to_string(),
                superset_id: n.id.clone(),
                similarity: n.similarity,
            });
        }
    }
    (out, log)
}
