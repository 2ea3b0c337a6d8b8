//! Exact cosine index and its on-disk format.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! magic   [u8; 8]  = b"CLMNIDX\0"
//! version u32      = 1
//! dim     u32
//! count   u64
//! ids     count × (len: u32, utf-8 bytes)
//! vectors count × dim × f32
//! ```
//!
//! A JSON sidecar (`<stem>.ids.json`) lists the same ids for inspection.
//! Stored vectors are rounded to `f32` when inserted, so a saved index loads
//! back bit-for-bit.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{dot, norm, EmbeddingVector, RetrievalError, RetrievalResult};

pub const INDEX_MAGIC: &[u8; 8] = b"CLMNIDX\0";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    id: String,
    vector: Vec<f64>,
    norm: f64,
}

/// Immutable exact-search index over labelled vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    entries: Vec<Entry>,
    positions: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    version: u32,
    dim: usize,
    ids: Vec<String>,
}

impl VectorIndex {
    /// An index with no entries.
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
            positions: HashMap::new(),
        }
    }

    /// Build from `(id, vector)` pairs. Ids must be unique, vectors must
    /// have dimension `dim` and a non-zero norm.
    pub fn build<I>(dim: usize, items: I) -> Result<Self, RetrievalError>
    where
        I: IntoIterator<Item = (String, EmbeddingVector)>,
    {
        let mut index = Self::empty(dim);
        for (id, vector) in items {
            if vector.dim() != dim {
                return Err(RetrievalError::DimensionMismatch {
                    expected: dim,
                    found: vector.dim(),
                });
            }
            if index.positions.contains_key(&id) {
                return Err(RetrievalError::DuplicateId(id));
            }
            let values: Vec<f64> = vector.values().iter().map(|&v| v as f32 as f64).collect();
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(RetrievalError::NonFinite(i));
            }
            let n = norm(&values);
            if n == 0.0 {
                return Err(RetrievalError::ZeroNorm);
            }
            index.positions.insert(id.clone(), index.entries.len());
            index.entries.push(Entry {
                id,
                vector: values,
                norm: n,
            });
        }
        Ok(index)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.positions.contains_key(id)
    }

    /// The stored (f32-rounded) vector for `id`.
    pub fn vector(&self, id: &str) -> Option<EmbeddingVector> {
        let entry = &self.entries[*self.positions.get(id)?];
        EmbeddingVector::new(entry.vector.clone()).ok()
    }

    /// Check that every stored norm matches a fresh computation.
    pub fn verify(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.vector.len() == self.dim && norm(&e.vector) == e.norm)
    }

    /// Exhaustive top-k by cosine similarity.
    ///
    /// Results are ordered by similarity, highest first, ties broken by
    /// ascending id. The `exclude` id is never returned.
    pub fn top_k(
        &self,
        query: &EmbeddingVector,
        k: usize,
        exclude: Option<&str>,
    ) -> Result<Vec<RetrievalResult>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::ZeroK);
        }
        if query.dim() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dim,
                found: query.dim(),
            });
        }
        let qnorm = query.norm();
        if qnorm == 0.0 {
            return Err(RetrievalError::ZeroNorm);
        }
        let mut scored: Vec<(f64, &str)> = self
            .entries
            .iter()
            .filter(|e| Some(e.id.as_str()) != exclude)
            .map(|e| {
                let sim = (dot(query.values(), &e.vector) / (qnorm * e.norm)).clamp(-1.0, 1.0);
                (sim, e.id.as_str())
            })
            .collect();
        let order = |a: &(f64, &str), b: &(f64, &str)| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1));
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        Ok(scored
            .into_iter()
            .map(|(similarity, id)| RetrievalResult {
                id: id.to_string(),
                similarity,
            })
            .collect())
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("ids.json")
    }

    /// Write the binary index to `path` and the id sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let mut file = io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
        self.write_to(&mut file).map_err(io_err)?;
        file.flush().map_err(io_err)?;
        let sidecar = Sidecar {
            version: INDEX_VERSION,
            dim: self.dim,
            ids: self.entries.iter().map(|e| e.id.clone()).collect(),
        };
        let json = serde_json::to_vec_pretty(&sidecar).map_err(|e| RetrievalError::Io(e.to_string()))?;
        fs::write(Self::sidecar_path(path), json).map_err(io_err)
    }

    /// Load an index written by [`VectorIndex::save`]. When the sidecar is
    /// present its ids must agree with the binary id table.
    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let bytes = fs::read(path).map_err(io_err)?;
        let index = Self::read_from(&mut bytes.as_slice())?;
        let sidecar_path = Self::sidecar_path(path);
        if sidecar_path.exists() {
            let sidecar: Sidecar = serde_json::from_slice(&fs::read(&sidecar_path).map_err(io_err)?)
                .map_err(|e| RetrievalError::Format(format!("sidecar: {e}")))?;
            if sidecar.dim != index.dim || !sidecar.ids.iter().map(String::as_str).eq(index.ids()) {
                return Err(RetrievalError::Format(
                    "sidecar ids do not match the index".into(),
                ));
            }
        }
        Ok(index)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&INDEX_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        for e in &self.entries {
            w.write_all(&(e.id.len() as u32).to_le_bytes())?;
            w.write_all(e.id.as_bytes())?;
        }
        for e in &self.entries {
            for &v in &e.vector {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, RetrievalError> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic)?;
        if &magic != INDEX_MAGIC {
            return Err(RetrievalError::Format("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != INDEX_VERSION {
            return Err(RetrievalError::Format(format!("unsupported version {version}")));
        }
        let dim = read_u32(r)? as usize;
        let mut count_bytes = [0u8; 8];
        read_exact(r, &mut count_bytes)?;
        let count = u64::from_le_bytes(count_bytes) as usize;
        let mut ids = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let len = read_u32(r)? as usize;
            let mut buf = vec![0u8; len];
            read_exact(r, &mut buf)?;
            ids.push(String::from_utf8(buf).map_err(|_| RetrievalError::Format("id is not UTF-8".into()))?);
        }
        let mut items = Vec::with_capacity(ids.len());
        for id in ids {
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                let mut b = [0u8; 4];
                read_exact(r, &mut b)?;
                values.push(f32::from_le_bytes(b) as f64);
            }
            items.push((id, EmbeddingVector::new(values)?));
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(io_err)? != 0 {
            return Err(RetrievalError::Format("trailing bytes".into()));
        }
        Self::build(dim, items)
    }
}

fn io_err(e: io::Error) -> RetrievalError {
    RetrievalError::Io(e.to_string())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), RetrievalError> {
    r.read_exact(buf)
        .map_err(|_| RetrievalError::Format("truncated file".into()))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, RetrievalError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}
