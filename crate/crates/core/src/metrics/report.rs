use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bleu4, meteor, rouge_l, rouge_n, Prf};
use crate::corpus::PostClaimPair;
use crate::inference::Prediction;

#[derive(Debug, thiserror::Error)]
pub enum EvaluationError {
    #[error("prediction id {0:?} appears more than once")]
    DuplicatePrediction(String),
    #[error("prediction id {0:?} has no reference")]
    UnknownPrediction(String),
    #[error("reference {0:?} has no gold claim")]
    MissingReference(String),
    #[error("reference id {0:?} appears more than once")]
    DuplicateReference(String),
    #[error("external scores: {0}")]
    ExternalScores(String),
}

/// All metrics for one prediction/reference pair, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub id: String,
    pub prediction: String,
    pub reference: String,
    pub rouge1: Prf,
    pub rouge2: Prf,
    pub rouge_l: Prf,
    pub bleu4: f64,
    pub meteor: f64,
    /// No prediction was produced for this reference; all scores are 0.
    pub missing: bool,
}

pub fn score_pair(id: &str, prediction: &str, reference: &str) -> ScoredPair {
    ScoredPair {
        id: id.to_string(),
        prediction: prediction.to_string(),
        reference: reference.to_string(),
        rouge1: rouge_n(prediction, reference, 1),
        rouge2: rouge_n(prediction, reference, 2),
        rouge_l: rouge_l(prediction, reference),
        bleu4: bleu4(prediction, reference),
        meteor: meteor(prediction, reference),
        missing: false,
    }
}

fn missing_pair(id: &str, reference: &str) -> ScoredPair {
    ScoredPair {
        id: id.to_string(),
        prediction: String::new(),
        reference: reference.to_string(),
        rouge1: Prf::default(),
        rouge2: Prf::default(),
        rouge_l: Prf::default(),
        bleu4: 0.0,
        meteor: 0.0,
        missing: true,
    }
}

/// Reported (×100, two decimals) P/R/F1 means.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PrfMeans {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Run-level means for one language. Every value is reported as
/// `round(100·x, 2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub language: String,
    /// Scored pairs, missing predictions included, dead letters excluded.
    pub n: usize,
    pub missing: usize,
    pub dead_letters: usize,
    pub rouge1: PrfMeans,
    pub rouge2: PrfMeans,
    pub rouge_l: PrfMeans,
    pub bleu4: f64,
    pub meteor: f64,
    /// Filled in from precomputed per-pair scores, see [`load_external_scores`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bertscore: Option<f64>,
    #[serde(skip)]
    pub pairs: Vec<ScoredPair>,
}

pub(crate) fn report_value(x: f64) -> f64 {
    (x * 10_000.0).round() / 100.0
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

fn prf_means(pairs: &[ScoredPair], pick: impl Fn(&ScoredPair) -> Prf) -> PrfMeans {
    let n = pairs.len();
    PrfMeans {
        precision: report_value(mean(pairs.iter().map(|p| pick(p).precision), n)),
        recall: report_value(mean(pairs.iter().map(|p| pick(p).recall), n)),
        f1: report_value(mean(pairs.iter().map(|p| pick(p).f1), n)),
    }
}

/// Score a prediction run against its references.
///
/// Each reference is matched to the prediction with the same post id.
/// References without a prediction score 0 everywhere and count towards `n`;
/// references whose prediction is a dead letter are left out of `n`.
pub fn evaluate_run(
    predictions: &[Prediction],
    references: &[PostClaimPair],
    language: &str,
) -> Result<MetricReport, EvaluationError> {
    let mut by_id: HashMap<&str, &Prediction> = HashMap::new();
    for p in predictions {
        if by_id.insert(p.post_id.as_str(), p).is_some() {
            return Err(EvaluationError::DuplicatePrediction(p.post_id.clone()));
        }
    }
    // Sorting by id makes the floating-point sums independent of input order.
    let mut refs: Vec<(&str, &str)> = Vec::with_capacity(references.len());
    let mut seen = HashSet::new();
    for r in references {
        if !seen.insert(r.id()) {
            return Err(EvaluationError::DuplicateReference(r.id().to_string()));
        }
        let claim = r
            .claim_text()
            .ok_or_else(|| EvaluationError::MissingReference(r.id().to_string()))?;
        refs.push((r.id(), claim));
    }
    if let Some(p) = predictions.iter().find(|p| !seen.contains(p.post_id.as_str())) {
        return Err(EvaluationError::UnknownPrediction(p.post_id.clone()));
    }
    refs.sort_unstable_by(|a, b| a.0.cmp(b.0));

    let dead_letters = refs
        .iter()
        .filter(|(id, _)| by_id.get(id).is_some_and(|p| p.is_dead_letter()))
        .count();
    let pairs: Vec<ScoredPair> = refs
        .par_iter()
        .filter_map(|&(id, reference)| match by_id.get(id) {
            Some(p) if p.is_dead_letter() => None,
            Some(p) => Some(score_pair(id, &p.claim, reference)),
            None => Some(missing_pair(id, reference)),
        })
        .collect();

    let n = pairs.len();
    Ok(MetricReport {
        language: language.to_string(),
        n,
        missing: pairs.iter().filter(|p| p.missing).count(),
        dead_letters,
        rouge1: prf_means(&pairs, |p| p.rouge1),
        rouge2: prf_means(&pairs, |p| p.rouge2),
        rouge_l: prf_means(&pairs, |p| p.rouge_l),
        bleu4: report_value(mean(pairs.iter().map(|p| p.bleu4), n)),
        meteor: report_value(mean(pairs.iter().map(|p| p.meteor), n)),
        bertscore: None,
        pairs,
    })
}

#[derive(Deserialize)]
struct ExternalRow {
    id: String,
    score: f64,
}

/// Read precomputed per-pair scores (for instance BERTScore F1) from a CSV
/// or JSONL file with `id` and `score` fields. Scores must lie in `[0, 1]`.
pub fn load_external_scores(path: &Path) -> Result<BTreeMap<String, f64>, EvaluationError> {
    let err = |m: String| EvaluationError::ExternalScores(format!("{}: {m}", path.display()));
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let rows: Vec<ExternalRow> = if path.extension().is_some_and(|e| e == "csv") {
        csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|e| err(e.to_string()))?
    } else {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| err(format!("line {}: {e}", i + 1))))
            .collect::<Result<_, _>>()?
    };
    let mut out = BTreeMap::new();
    for row in rows {
        if !(0.0..=1.0).contains(&row.score) {
            return Err(err(format!("score for {:?} outside [0, 1]", row.id)));
        }
        if out.insert(row.id.clone(), row.score).is_some() {
            return Err(err(format!("duplicate id {:?}", row.id)));
        }
    }
    Ok(out)
}

impl MetricReport {
    /// Merge external per-pair scores into the report. Pairs with a
    /// prediction must all have a score; missing predictions count as 0.
    pub fn merge_external(&mut self, scores: &BTreeMap<String, f64>) -> Result<(), EvaluationError> {
        let mut total = 0.0;
        for p in &self.pairs {
            match (scores.get(&p.id), p.missing) {
                (Some(s), false) => total += s,
                (None, false) => {
                    return Err(EvaluationError::ExternalScores(format!("no score for {:?}", p.id)))
                }
                (_, true) => {}
            }
        }
        self.bertscore = Some(report_value(mean(std::iter::once(total), self.n)));
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Single-row table under a `Language` header.
    pub fn table(&self) -> String {
        render_table("Language", &[(self.language.clone(), Some(self))])
    }
}

const METRIC_HEADER: [&str; 6] = ["ROUGE-1", "ROUGE-2", "ROUGE-L", "BLEU-4", "METEOR", "BERTScore"];

/// Fixed-width table with the column order ROUGE-1 (P R F1), ROUGE-2
/// (P R F1), ROUGE-L (P R F1), BLEU-4, METEOR, BERTScore. A `None` row is
/// printed as failed.
pub fn render_table(label: &str, rows: &[(String, Option<&MetricReport>)]) -> String {
    let width = rows
        .iter()
        .map(|(l, _)| l.chars().count())
        .chain([label.chars().count()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{label:<width$} | {:^20} | {:^20} | {:^20} | {:>6} | {:>6} | {:>9}",
        METRIC_HEADER[0], METRIC_HEADER[1], METRIC_HEADER[2], METRIC_HEADER[3], METRIC_HEADER[4], METRIC_HEADER[5]
    );
    let prf_head = format!("{:>6} {:>6} {:>6}", "P", "R", "F1");
    let _ = writeln!(
        out,
        "{:<width$} | {prf_head} | {prf_head} | {prf_head} | {:>6} | {:>6} | {:>9}",
        "", "", "", ""
    );
    let _ = writeln!(out, "{}", "-".repeat(width + 3 * 23 + 3 + 9 + 9 + 12));
    for (name, report) in rows {
        match report {
            Some(r) => {
                let prf = |m: &PrfMeans| format!("{:>6.2} {:>6.2} {:>6.2}", m.precision, m.recall, m.f1);
                let bert = r.bertscore.map_or("-".to_string(), |b| format!("{b:.2}"));
                let _ = writeln!(
                    out,
                    "{name:<width$} | {} | {} | {} | {:>6.2} | {:>6.2} | {bert:>9}",
                    prf(&r.rouge1),
                    prf(&r.rouge2),
                    prf(&r.rouge_l),
                    r.bleu4,
                    r.meteor
                );
            }
            None => {
                let _ = writeln!(out, "{name:<width$} | FAILED");
            }
        }
    }
    out
}
