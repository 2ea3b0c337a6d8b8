use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LlmError;

/// Hex SHA-256 over length-prefixed key fields.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(String);

impl CacheKey {
    fn from_fields(fields: &[&str]) -> Self {
        let mut hasher = Sha256::new();
        for field in fields {
            hasher.update((field.len() as u64).to_le_bytes());
            hasher.update(field.as_bytes());
        }
        CacheKey(hex::encode(hasher.finalize()))
    }

    /// Key of a chat response: (model id, system prompt, user prompt).
    pub fn for_prompt(model: &str, system: &str, user: &str) -> Self {
        Self::from_fields(&["chat", model, system, user])
    }

    /// Key of an embedding: (model id, text).
    pub fn for_embedding(model: &str, text: &str) -> Self {
        Self::from_fields(&["embedding", model, text])
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    model: String,
    response: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
    pub writes: usize,
}

/// Content-addressed response store.
///
/// Entries live in memory and, when a directory is configured, as one JSON
/// document per response at `<dir>/<hex digest>.json`. Writes are
/// put-if-absent: the first response stored under a key wins.
#[derive(Debug)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    entries: RwLock<HashMap<CacheKey, String>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
    writes: AtomicUsize,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            entries: RwLock::new(HashMap::new()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
            writes: AtomicUsize::new(0),
        }
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)
            .map_err(|e| LlmError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: Some(dir),
            ..Self::in_memory()
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path_for(&self, key: &CacheKey) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{}.json", key.0)))
    }

    pub fn get(&self, key: &CacheKey) -> Option<String> {
        let found = self.lookup(key);
        let counter = if found.is_some() { &self.hits } else { &self.misses };
        counter.fetch_add(1, Ordering::Relaxed);
        found
    }

    fn lookup(&self, key: &CacheKey) -> Option<String> {
        if let Some(v) = self.entries.read().ok()?.get(key) {
            return Some(v.clone());
        }
        let path = self.path_for(key)?;
        let bytes = fs::read(&path).ok()?;
        let entry: CacheEntry = serde_json::from_slice(&bytes).ok()?;
        if entry.key != key.0 {
            return None;
        }
        let mut entries = self.entries.write().ok()?;
        Some(entries.entry(key.clone()).or_insert(entry.response).clone())
    }

    /// Store a response unless one is already present under `key`.
    pub fn put(&self, key: &CacheKey, model: &str, response: &str) -> Result<(), LlmError> {
        let mut entries = self
            .entries
            .write()
            .map_err(|_| LlmError::Cache("cache lock poisoned".into()))?;
        if entries.contains_key(key) {
            return Ok(());
        }
        if let Some(path) = self.path_for(key) {
            if !path.exists() {
                let entry = CacheEntry {
                    key: key.0.clone(),
                    model: model.to_string(),
                    response: response.to_string(),
                };
                write_atomic(&path, &entry)
                    .map_err(|e| LlmError::Cache(format!("{}: {e}", path.display())))?;
            }
        }
        entries.insert(key.clone(), response.to_string());
        self.writes.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().map(|e| e.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            writes: self.writes.load(Ordering::Relaxed),
        }
    }
}

fn write_atomic(path: &Path, entry: &CacheEntry) -> std::io::Result<()> {
    let tmp = path.with_extension(format!("json.tmp{}", std::process::id()));
    {
        let mut file = fs::File::create(&tmp)?;
        serde_json::to_writer(&mut file, entry)?;
        file.write_all(b"\n")?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)
}
