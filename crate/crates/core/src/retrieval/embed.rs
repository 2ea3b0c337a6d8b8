use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{EmbeddingClient, EmbeddingVector, RetrievalError};
use crate::llm::{retry, CacheKey, LlmError, ResponseCache, RetryPolicy};
use crate::pool::{map_ordered, DEFAULT_CONCURRENCY};

pub const DEFAULT_BATCH_SIZE: usize = 128;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EmbedderStats {
    /// Requests sent to the service, retries included.
    pub calls: usize,
    pub cache_hits: usize,
}

/// Batched, cached, retrying wrapper around an [`EmbeddingClient`].
pub struct Embedder<'a> {
    client: &'a dyn EmbeddingClient,
    cache: &'a ResponseCache,
    pub batch_size: usize,
    pub concurrency: usize,
    pub retry: RetryPolicy,
    /// Expected dimension; when unset the first batch decides.
    pub dim: Option<usize>,
    calls: AtomicUsize,
    cache_hits: AtomicUsize,
}

impl<'a> Embedder<'a> {
    pub fn new(client: &'a dyn EmbeddingClient, cache: &'a ResponseCache) -> Self {
        Self {
            client,
            cache,
            batch_size: DEFAULT_BATCH_SIZE,
            concurrency: DEFAULT_CONCURRENCY,
            retry: RetryPolicy::default(),
            dim: None,
            calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
        }
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = Some(dim);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.concurrency = n.max(1);
        self
    }

    pub fn stats(&self) -> EmbedderStats {
        EmbedderStats {
            calls: self.calls.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
        }
    }

    pub fn model_id(&self) -> &str {
        self.client.model_id()
    }

    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let mut out = self.embed_texts(&[text.to_string()])?;
        Ok(out.remove(0))
    }

    /// One vector per text, in order. Cached texts are not resent and
    /// repeated texts are embedded once.
    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(RetrievalError::EmptyText(i));
        }
        let model = self.client.model_id();
        let mut known: HashMap<&str, Vec<f64>> = HashMap::new();
        let mut pending: Vec<String> = Vec::new();
        let mut queued: HashSet<&str> = HashSet::new();
        for text in texts {
            if known.contains_key(text.as_str()) || queued.contains(text.as_str()) {
                continue;
            }
            let cached = self
                .cache
                .get(&CacheKey::for_embedding(model, text))
                .and_then(|raw| serde_json::from_str::<Vec<f64>>(&raw).ok());
            match cached {
                Some(v) => {
                    self.cache_hits.fetch_add(1, Ordering::Relaxed);
                    known.insert(text.as_str(), v);
                }
                None => {
                    queued.insert(text.as_str());
                    pending.push(text.clone());
                }
            }
        }

        let batches: Vec<&[String]> = pending.chunks(self.batch_size).collect();
        let results = map_ordered(&batches, self.concurrency, |_, batch| {
            retry(&self.retry, || {
                self.calls.fetch_add(1, Ordering::Relaxed);
                let vectors = self.client.embed(batch)?;
                if vectors.len() != batch.len() {
                    return Err(LlmError::Protocol(format!(
                        "expected {} vectors, got {}",
                        batch.len(),
                        vectors.len()
                    )));
                }
                Ok(vectors)
            })
        });

        let mut failed = Vec::new();
        let mut last_error = None;
        let mut fresh: Vec<(String, Vec<f64>)> = Vec::new();
        for (i, (batch, result)) in batches.iter().zip(results).enumerate() {
            match result {
                Ok(vectors) => fresh.extend(batch.iter().cloned().zip(vectors)),
                Err(e) => {
                    failed.push(i);
                    last_error = Some(e);
                }
            }
        }
        if let Some(error) = last_error {
            return Err(RetrievalError::BatchesFailed {
                batches: failed,
                error,
            });
        }

        let mut dim = self.dim;
        for v in known.values().chain(fresh.iter().map(|(_, v)| v)) {
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(RetrievalError::DimensionMismatch {
                        expected: d,
                        found: v.len(),
                    })
                }
                Some(_) => {}
            }
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(RetrievalError::NonFinite(i));
            }
        }
        for (text, vector) in &fresh {
            let payload = serde_json::to_string(vector).expect("finite floats serialize");
            self.cache
                .put(&CacheKey::for_embedding(model, text), model, &payload)
                .map_err(|e| RetrievalError::Io(e.to_string()))?;
        }
        let fresh: HashMap<&str, Vec<f64>> =
            fresh.iter().map(|(t, v)| (t.as_str(), v.clone())).collect();
        texts
            .iter()
            .map(|t| {
                let v = known
                    .get(t.as_str())
                    .or_else(|| fresh.get(t.as_str()))
                    .cloned()
                    .expect("every text was embedded");
                EmbeddingVector::new(v)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::mock::FnEmbedder;

    fn counting_embedder(calls: &AtomicUsize) -> FnEmbedder<impl Fn(&[String]) -> Result<Vec<Vec<f64>>, LlmError> + '_> {
        FnEmbedder::new("mock", move |texts: &[String]| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(texts
                .iter()
                .map(|t| {
                    let mut v = vec![0.0; 4];
                    v[t.len() % 4] = 1.0;
                    v
                })
                .collect())
        })
    }

    #[test]
    fn three_hundred_texts_three_calls() {
        let calls = AtomicUsize::new(0);
        let client = counting_embedder(&calls);
        let cache = ResponseCache::in_memory();
        let embedder = Embedder::new(&client, &cache);
        let texts: Vec<String> = (0..300).map(|i| format!("text {i}")).collect();
        let vectors = embedder.embed_texts(&texts).unwrap();
        assert_eq!(vectors.len(), 300);
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        assert!(vectors.iter().all(|v| v.dim() == 4));
    }

    #[test]
    fn repeated_text_is_embedded_once() {
        let calls = AtomicUsize::new(0);
        let client = counting_embedder(&calls);
        let cache = ResponseCache::in_memory();
        let embedder = Embedder::new(&client, &cache);
        let a = embedder.embed_one("same").unwrap();
        let b = embedder.embed_one("same").unwrap();
        assert_eq!(a, b);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(embedder.stats().cache_hits, 1);
        let both = embedder
            .embed_texts(&["new".to_string(), "new".to_string()])
            .unwrap();
        assert_eq!(both[0], both[1]);
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn failed_batches_are_listed() {
        let client = FnEmbedder::new("mock", |texts: &[String]| {
            if texts.iter().any(|t| t == "bad") {
                Err(LlmError::Status { code: 500, body: String::new() })
            } else {
                Ok(texts.iter().map(|_| vec![1.0, 0.0]).collect())
            }
        });
        let cache = ResponseCache::in_memory();
        let embedder = Embedder::new(&client, &cache)
            .with_batch_size(2)
            .with_retry(RetryPolicy::immediate(2));
        let texts: Vec<String> = ["a", "b", "c", "bad", "e"].iter().map(|s| s.to_string()).collect();
        match embedder.embed_texts(&texts) {
            Err(RetrievalError::BatchesFailed { batches, .. }) => assert_eq!(batches, vec![1]),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(embedder.stats().calls, 4);
    }

    #[test]
    fn dimension_checks() {
        let client = FnEmbedder::new("mock", |texts: &[String]| {
            Ok(texts
                .iter()
                .map(|t| vec![1.0; if t.starts_with('x') { 3 } else { 2 }])
                .collect())
        });
        let cache = ResponseCache::in_memory();
        let embedder = Embedder::new(&client, &cache).with_batch_size(1);
        let err = embedder
            .embed_texts(&["a".to_string(), "xa".to_string()])
            .unwrap_err();
        assert!(matches!(err, RetrievalError::DimensionMismatch { .. }));
        let strict = Embedder::new(&client, &cache).with_dim(3);
        assert!(matches!(
            strict.embed_texts(&["b".to_string()]),
            Err(RetrievalError::DimensionMismatch { expected: 3, found: 2 })
        ));
        assert_eq!(
            strict.embed_texts(&["".to_string()]),
            Err(RetrievalError::EmptyText(0))
        );
    }

    #[test]
    fn non_finite_rejected() {
        let client = FnEmbedder::new("mock", |texts: &[String]| {
            Ok(texts.iter().map(|_| vec![f64::INFINITY]).collect())
        });
        let cache = ResponseCache::in_memory();
        let embedder = Embedder::new(&client, &cache);
        assert!(matches!(
            embedder.embed_texts(&["a".to_string()]),
            Err(RetrievalError::NonFinite(0))
        ));
        assert!(cache.is_empty());
    }
}
