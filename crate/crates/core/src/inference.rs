//! Retrieval-augmented few-shot claim normalization for unseen posts.
//!
//! For each post: embed it, fetch the most similar training posts from the
//! index, render them as worked 5W1H examples ahead of the target post, ask
//! the model, and parse the claim out of its JSON answer.

use std::collections::HashMap;
use std::io::{self, BufRead, Read, Write};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{
    build_5w1h_messages, build_plain_messages, fill, parse_5w1h_response, parse_claim_response,
    FiveW1H, PromptBundle, TrainingExample, USER_TEMPLATE,
};
use crate::corpus::Post;
use crate::llm::{Generator, LlmError};
use crate::pool::{map_ordered, DEFAULT_CONCURRENCY};
use crate::retrieval::{Embedder, EmbeddingVector, RetrievalError, VectorIndex, DEFAULT_K};

/// Upper bound on in-context examples per prompt.
pub const MAX_SHOTS: usize = 5;

/// A worked example shown to the model before the target post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub post_text: String,
    pub reasoning: FiveW1H,
}

impl From<&TrainingExample> for FewShotExample {
    fn from(ex: &TrainingExample) -> Self {
        Self {
            post_text: ex.post_text().to_string(),
            reasoning: ex.reasoning.clone(),
        }
    }
}

/// The model's answer for one post.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub post_id: String,
    pub claim: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<FiveW1H>,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub retrieved_ids: Vec<String>,
    /// Set when generation failed after retries; the claim is then empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dead_letter: Option<String>,
}

impl Prediction {
    pub fn is_dead_letter(&self) -> bool {
        self.dead_letter.is_some()
    }
}

/// Build the few-shot prompt. Shots are rendered in the order given, each as
/// the filled user template followed by its 5W1H answer, then the target.
/// With no shots this is exactly [`build_5w1h_messages`].
pub fn assemble_fewshot_prompt(post_text: &str, shots: &[FewShotExample]) -> PromptBundle {
    let mut bundle = build_5w1h_messages(post_text);
    if shots.is_empty() {
        return bundle;
    }
    let mut user = String::new();
    for shot in shots.iter().take(MAX_SHOTS) {
        user.push_str(&fill(USER_TEMPLATE, &shot.post_text));
        user.push_str("\n\n");
        user.push_str(&shot.reasoning.to_json());
        user.push_str("\n\n");
    }
    user.push_str(&bundle.user);
    bundle.user = user;
    bundle
}

/// Which prompt family to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    /// Claim-only prompt, no structured reasoning, no examples.
    Plain,
    /// 5W1H prompt without examples.
    ZeroShot,
    /// 5W1H prompt with retrieved examples.
    FewShot,
}

/// Order of retrieved examples inside the prompt.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotOrder {
    /// Least similar first, so the closest example sits next to the target.
    #[default]
    MostSimilarLast,
    MostSimilarFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceOptions {
    pub style: PromptStyle,
    pub k: usize,
    pub shot_order: ShotOrder,
    pub concurrency: usize,
    /// Batch fails when more than this fraction of posts dead-letter.
    pub max_dead_letter_rate: f64,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            style: PromptStyle::FewShot,
            k: DEFAULT_K,
            shot_order: ShotOrder::default(),
            concurrency: DEFAULT_CONCURRENCY,
            max_dead_letter_rate: 0.1,
        }
    }
}

/// Training examples, their index and the embedder used to query it.
pub struct ShotStore<'a> {
    pub index: &'a VectorIndex,
    pub embedder: &'a Embedder<'a>,
    examples: HashMap<String, FewShotExample>,
}

impl<'a> ShotStore<'a> {
    pub fn new(index: &'a VectorIndex, embedder: &'a Embedder<'a>, examples: &[TrainingExample]) -> Self {
        Self {
            index,
            embedder,
            examples: examples
                .iter()
                .map(|e| (e.id().to_string(), FewShotExample::from(e)))
                .collect(),
        }
    }

    /// Retrieved ids in descending similarity and the matching shots in
    /// prompt order.
    fn shots(
        &self,
        query: &EmbeddingVector,
        options: &InferenceOptions,
        exclude: &str,
    ) -> Result<(Vec<String>, Vec<FewShotExample>), RetrievalError> {
        if self.index.is_empty() {
            return Ok((Vec::new(), Vec::new()));
        }
        let k = options.k.clamp(1, MAX_SHOTS);
        let hits = self.index.top_k(query, k, Some(exclude))?;
        let ids: Vec<String> = hits.into_iter().map(|h| h.id).collect();
        let mut shots: Vec<FewShotExample> = ids
            .iter()
            .filter_map(|id| self.examples.get(id).cloned())
            .collect();
        if options.shot_order == ShotOrder::MostSimilarLast {
            shots.reverse();
        }
        Ok((ids, shots))
    }
}

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("few-shot inference needs a shot store")]
    NoShotStore,
    #[error("{failed} of {total} posts failed, above the {limit:.0}% ceiling")]
    TooManyFailures {
        failed: usize,
        total: usize,
        limit: f64,
        predictions: Vec<Prediction>,
        report: RunReport,
    },
}

/// Counters for one batch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub total: usize,
    pub successes: usize,
    pub dead_letters: usize,
    pub cache_hits: usize,
    pub llm_calls: usize,
    #[serde(with = "secs")]
    pub wall_time: Duration,
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        f64::deserialize(d).map(Duration::from_secs_f64)
    }
}

struct Outcome {
    prediction: Prediction,
    cached: bool,
    calls: usize,
}

fn dead(post: &Post, model: &str, retrieved_ids: Vec<String>, error: String) -> Outcome {
    tracing::warn!(id = %post.id, %error, "dead letter");
    Outcome {
        prediction: Prediction {
            post_id: post.id.clone(),
            model: model.to_string(),
            retrieved_ids,
            dead_letter: Some(error),
            ..Default::default()
        },
        cached: false,
        calls: 0,
    }
}

fn run_one(
    post: &Post,
    query: Option<Result<&EmbeddingVector, String>>,
    store: Option<&ShotStore<'_>>,
    generator: &Generator<'_>,
    options: &InferenceOptions,
) -> Outcome {
    let model = generator.model.model_id();
    let (retrieved_ids, bundle) = match options.style {
        PromptStyle::Plain => (Vec::new(), build_plain_messages(&post.text)),
        PromptStyle::ZeroShot => (Vec::new(), build_5w1h_messages(&post.text)),
        PromptStyle::FewShot => {
            let (Some(store), Some(query)) = (store, query) else {
                return dead(post, model, Vec::new(), InferenceError::NoShotStore.to_string());
            };
            let shots = query.and_then(|q| store.shots(q, options, &post.id).map_err(|e| e.to_string()));
            match shots {
                Ok((ids, shots)) => (ids, assemble_fewshot_prompt(&post.text, &shots)),
                Err(e) => return dead(post, model, Vec::new(), e),
            }
        }
    };
    let result: Result<_, LlmError> = match options.style {
        PromptStyle::Plain => generator
            .generate(&bundle.system, &bundle.user, parse_claim_response)
            .map(|c| (c.value, None, c.cached, c.attempts)),
        _ => generator
            .generate(&bundle.system, &bundle.user, parse_5w1h_response)
            .map(|c| (c.value.claim.clone(), Some(c.value), c.cached, c.attempts)),
    };
    match result {
        Ok((claim, reasoning, cached, calls)) => Outcome {
            prediction: Prediction {
                post_id: post.id.clone(),
                claim,
                reasoning,
                model: model.to_string(),
                retrieved_ids,
                dead_letter: None,
            },
            cached,
            calls,
        },
        Err(e) => dead(post, model, retrieved_ids, e.to_string()),
    }
}

/// Normalize one post. Failures come back as a dead-letter prediction.
pub fn normalize_post(
    post: &Post,
    store: Option<&ShotStore<'_>>,
    generator: &Generator<'_>,
    options: &InferenceOptions,
) -> Prediction {
    let embedded = match (options.style, store) {
        (PromptStyle::FewShot, Some(s)) if !s.index.is_empty() => {
            Some(s.embedder.embed_one(&post.text).map_err(|e| e.to_string()))
        }
        (PromptStyle::FewShot, Some(_)) => {
            // Empty index: no query needed, any vector works.
            Some(Ok(EmbeddingVector::new(vec![1.0]).expect("finite")))
        }
        _ => None,
    };
    let query = embedded.as_ref().map(|r| r.as_ref().map_err(Clone::clone));
    run_one(post, query, store, generator, options).prediction
}

/// Normalize a batch of posts, preserving input order.
pub fn normalize_batch(
    posts: &[Post],
    store: Option<&ShotStore<'_>>,
    generator: &Generator<'_>,
    options: &InferenceOptions,
) -> Result<(Vec<Prediction>, RunReport), InferenceError> {
    let started = Instant::now();
    if options.style == PromptStyle::FewShot && store.is_none() {
        return Err(InferenceError::NoShotStore);
    }
    let queries: Vec<Option<Result<EmbeddingVector, String>>> = match store {
        Some(s) if options.style == PromptStyle::FewShot && !s.index.is_empty() => {
            let texts: Vec<String> = posts.iter().map(|p| p.text.clone()).collect();
            match s.embedder.embed_texts(&texts) {
                Ok(vectors) => vectors.into_iter().map(|v| Some(Ok(v))).collect(),
                // Fall back to one request per post so a bad batch only
                // dead-letters the posts it actually affects.
                Err(_) => posts
                    .iter()
                    .map(|p| Some(s.embedder.embed_one(&p.text).map_err(|e| e.to_string())))
                    .collect(),
            }
        }
        Some(_) if options.style == PromptStyle::FewShot => posts
            .iter()
            .map(|_| Some(Ok(EmbeddingVector::new(vec![1.0]).expect("finite"))))
            .collect(),
        _ => posts.iter().map(|_| None).collect(),
    };
    let work: Vec<(&Post, &Option<Result<EmbeddingVector, String>>)> = posts.iter().zip(&queries).collect();
    let outcomes = map_ordered(&work, options.concurrency, |_, (post, query)| {
        let query = query.as_ref().map(|r| r.as_ref().map_err(Clone::clone));
        run_one(post, query, store, generator, options)
    });

    let mut report = RunReport {
        total: posts.len(),
        ..Default::default()
    };
    let mut predictions = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        if o.prediction.is_dead_letter() {
            report.dead_letters += 1;
        } else {
            report.successes += 1;
        }
        report.cache_hits += usize::from(o.cached);
        report.llm_calls += o.calls;
        predictions.push(o.prediction);
    }
    report.wall_time = started.elapsed();

    let total = report.total;
    let failed = report.dead_letters;
    if total > 0 && failed as f64 / total as f64 > options.max_dead_letter_rate {
        return Err(InferenceError::TooManyFailures {
            failed,
            total,
            limit: options.max_dead_letter_rate * 100.0,
            predictions,
            report,
        });
    }
    Ok((predictions, report))
}

/// Submission CSV: `id`, `normalized claim`. Dead letters get an empty claim.
pub fn write_predictions_csv<W: Write>(predictions: &[Prediction], writer: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "normalized claim"])?;
    for p in predictions {
        w.write_record([p.post_id.as_str(), p.claim.as_str()])?;
    }
    w.flush()
}

/// Reads a submission CSV. Rows with an empty claim come back as dead letters.
pub fn read_predictions_csv<R: Read>(reader: R) -> io::Result<Vec<Prediction>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            io::Error::new(io::ErrorKind::InvalidData, format!("missing column {name:?}"))
        })
    };
    let (id_col, claim_col) = (col("id")?, col("normalized claim")?);
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let claim = record.get(claim_col).unwrap_or_default().trim().to_string();
        out.push(Prediction {
            post_id: record.get(id_col).unwrap_or_default().to_string(),
            dead_letter: claim.is_empty().then(|| "empty claim".to_string()),
            claim,
            ..Default::default()
        });
    }
    Ok(out)
}

/// Full predictions, one JSON object per line.
pub fn write_predictions_jsonl<W: Write>(predictions: &[Prediction], mut writer: W) -> io::Result<()> {
    for p in predictions {
        serde_json::to_writer(&mut writer, p)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn read_predictions_jsonl<R: BufRead>(reader: R) -> io::Result<Vec<Prediction>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{Provenance, SYSTEM_PROMPT};
    use crate::corpus::{PostClaimPair, Split};
    use crate::llm::mock::{target_post, FnChat, HashingEmbedder};
    use crate::llm::{ResponseCache, RetryPolicy};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn shot(i: usize) -> FewShotExample {
        FewShotExample {
            post_text: format!("shot post {i}"),
            reasoning: FiveW1H {
                what: format!("topic {i}"),
                claim: format!("shot claim {i}"),
                ..Default::default()
            },
        }
    }

    #[test]
    fn zero_shots_reduce_to_plain_5w1h() {
        assert_eq!(assemble_fewshot_prompt("target", &[]), build_5w1h_messages("target"));
    }

    #[test]
    fn five_shots_six_posts() {
        let shots: Vec<_> = (0..5).map(shot).collect();
        let b = assemble_fewshot_prompt("target", &shots);
        assert_eq!(b.user.matches("Post:").count(), 6);
        assert_eq!(b.system, SYSTEM_PROMPT);
        assert!(b.user.ends_with(&build_5w1h_messages("target").user));
        let positions: Vec<usize> = (0..5).map(|i| b.user.find(&format!("shot post {i}")).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(b.user.contains("\"claim\": \"shot claim 3\""));
        assert_eq!(b, assemble_fewshot_prompt("target", &shots));
    }

    fn example(id: &str, text: &str) -> TrainingExample {
        TrainingExample {
            pair: PostClaimPair {
                post: Post {
                    id: id.into(),
                    language: "eng".into(),
                    text: text.into(),
                    split: Split::Train,
                },
                claim: Some(format!("claim for {id}")),
                recall_score: None,
            },
            reasoning: FiveW1H {
                claim: format!("claim for {id}"),
                ..Default::default()
            },
            provenance: Provenance::Manual,
        }
    }

    fn post(id: &str, text: &str) -> Post {
        Post {
            id: id.into(),
            language: "eng".into(),
            text: text.into(),
            split: Split::Test,
        }
    }

    fn echo_claim_json(post: &str) -> String {
        FiveW1H {
            claim: format!("echo {post}"),
            ..Default::default()
        }
        .to_json()
    }

    #[test]
    fn few_shot_prediction_records_retrieval() {
        let examples: Vec<_> = (0..8)
            .map(|i| example(&format!("t{i}"), &format!("vaccine rumour number {i} spreads")))
            .collect();
        let client = HashingEmbedder::new(64);
        let cache = ResponseCache::in_memory();
        let embedder = Embedder::new(&client, &cache);
        let texts: Vec<String> = examples.iter().map(|e| e.post_text().to_string()).collect();
        let vectors = embedder.embed_texts(&texts).unwrap();
        let index = VectorIndex::build(64, examples.iter().map(|e| e.id().to_string()).zip(vectors)).unwrap();
        let store = ShotStore::new(&index, &embedder, &examples);

        let chat = FnChat::new("mock", |req| {
            assert_eq!(req.user().unwrap().matches("Post:").count(), 6);
            Ok(echo_claim_json(target_post(req.user().unwrap()).unwrap()))
        });
        let llm_cache = ResponseCache::in_memory();
        let gen = Generator::new(&chat, &llm_cache);
        let target = post("x", "vaccine rumour spreads fast");
        let p = normalize_post(&target, Some(&store), &gen, &InferenceOptions::default());
        assert_eq!(p.claim, "echo vaccine rumour spreads fast");
        assert_eq!(p.retrieved_ids.len(), 5);
        let q = embedder.embed_one(&target.text).unwrap();
        let oracle: Vec<String> = index.top_k(&q, 5, Some("x")).unwrap().into_iter().map(|r| r.id).collect();
        assert_eq!(p.retrieved_ids, oracle);
        assert!(p.reasoning.is_some());
    }

    #[test]
    fn empty_index_takes_zero_shot_path() {
        let client = HashingEmbedder::new(8);
        let cache = ResponseCache::in_memory();
        let embedder = Embedder::new(&client, &cache);
        let index = VectorIndex::empty(8);
        let store = ShotStore::new(&index, &embedder, &[]);
        let chat = FnChat::new("mock", |req| {
            assert_eq!(req.user().unwrap(), build_5w1h_messages("lonely post").user);
            Ok(echo_claim_json("lonely post"))
        });
        let llm_cache = ResponseCache::in_memory();
        let gen = Generator::new(&chat, &llm_cache);
        let p = normalize_post(&post("a", "lonely post"), Some(&store), &gen, &InferenceOptions::default());
        assert_eq!(p.claim, "echo lonely post");
        assert!(p.retrieved_ids.is_empty());
    }

    #[test]
    fn batch_with_injected_failures() {
        let calls = AtomicUsize::new(0);
        let chat = FnChat::new("mock", |req| {
            calls.fetch_add(1, Ordering::SeqCst);
            let post = target_post(req.user().unwrap()).unwrap();
            if ["post 7", "post 42", "post 99"].contains(&post) {
                Err(LlmError::Status { code: 500, body: String::new() })
            } else {
                Ok(echo_claim_json(post))
            }
        });
        let cache = ResponseCache::in_memory();
        let gen = Generator::new(&chat, &cache).with_retry(RetryPolicy::immediate(2));
        let posts: Vec<Post> = (0..100).map(|i| post(&format!("p{i}"), &format!("post {i}"))).collect();
        let options = InferenceOptions {
            style: PromptStyle::ZeroShot,
            ..Default::default()
        };
        let (preds, report) = normalize_batch(&posts, None, &gen, &options).unwrap();
        assert_eq!(preds.len(), 100);
        assert_eq!((report.successes, report.dead_letters), (97, 3));
        let ids: Vec<_> = preds.iter().map(|p| p.post_id.clone()).collect();
        let expected: Vec<_> = posts.iter().map(|p| p.id.clone()).collect();
        assert_eq!(ids, expected);
        assert!(preds[7].is_dead_letter() && preds[7].claim.is_empty());

        let before = calls.load(Ordering::SeqCst);
        let (again, report2) = normalize_batch(&posts, None, &gen, &options).unwrap();
        // only the three failing posts are retried
        assert_eq!(calls.load(Ordering::SeqCst) - before, 6);
        assert_eq!(report2.cache_hits, 97);
        assert_eq!(again, preds);
    }

    #[test]
    fn failure_ceiling() {
        let chat = FnChat::new("mock", |_| Err(LlmError::Parse("bad".into())));
        let cache = ResponseCache::in_memory();
        let gen = Generator::new(&chat, &cache).with_retry(RetryPolicy::immediate(1));
        let posts = vec![post("a", "x"), post("b", "y")];
        let options = InferenceOptions {
            style: PromptStyle::Plain,
            ..Default::default()
        };
        assert!(matches!(
            normalize_batch(&posts, None, &gen, &options),
            Err(InferenceError::TooManyFailures { failed: 2, .. })
        ));
    }

    #[test]
    fn prediction_files_round_trip() {
        let preds = vec![
            Prediction {
                post_id: "a".into(),
                claim: "A claim, with \"quotes\"".into(),
                model: "m".into(),
                retrieved_ids: vec!["t1".into()],
                ..Default::default()
            },
            Prediction {
                post_id: "b".into(),
                dead_letter: Some("timeout".into()),
                ..Default::default()
            },
        ];
        let mut buf = Vec::new();
        write_predictions_jsonl(&preds, &mut buf).unwrap();
        assert_eq!(read_predictions_jsonl(buf.as_slice()).unwrap(), preds);

        let mut csv_buf = Vec::new();
        write_predictions_csv(&preds, &mut csv_buf).unwrap();
        let text = String::from_utf8(csv_buf.clone()).unwrap();
        assert!(text.starts_with("id,normalized claim\n"));
        let back = read_predictions_csv(csv_buf.as_slice()).unwrap();
        assert_eq!(back[0].claim, preds[0].claim);
        assert!(back[1].is_dead_letter());
    }
}
