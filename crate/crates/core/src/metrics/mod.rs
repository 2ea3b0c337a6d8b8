//! Text-generation metrics: ROUGE-1/2/L, sentence BLEU-4 and METEOR.
//!
//! All metrics share [`metric_tokenize`], score a single candidate against a
//! single reference, and return values in `[0, 1]`. Run-level aggregation
//! lives in [`evaluate_run`].

mod bleu;
mod meteor;
mod report;
mod rouge;
mod stem;

use crate::text::metric_token;

pub use bleu::{bleu4, bleu4_tokens, BLEU_EPSILON};
pub use meteor::{
    align, meteor, meteor_details, meteor_tokens, AlignStrategy, Alignment, MeteorDetails,
    EXACT_SEARCH_MAX_TOKENS,
};
pub use report::{
    evaluate_run, load_external_scores, render_table, score_pair, EvaluationError, MetricReport, PrfMeans,
    ScoredPair,
};
pub use rouge::{lcs_length, rouge_l, rouge_n, Prf};
pub use stem::{is_latin_script, stem};

/// Lowercase, split punctuation and symbols into standalone tokens, split on
/// whitespace.
pub fn metric_tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    metric_token()
        .find_iter(&lowered)
        .map(|m| m.as_str().to_string())
        .collect()
}
