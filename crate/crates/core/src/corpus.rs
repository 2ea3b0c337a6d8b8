//! Loading, validating and describing post/claim datasets.
//!
//! Two input layouts are accepted:
//!
//! - CSV (RFC-4180 quoting) with a `post` column and a `normalized claim`
//!   column, plus an optional `id` column.
//! - JSONL, one object per line, with `post`, `claim` and optional `id` and
//!   `recall_score` fields. This is also the layout written by [`write_jsonl`],
//!   so a dataset can be loaded, annotated and loaded again.
//!
//! Records without an id get `<language>-<split>-<row index>` (zero-based).

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::word_count;

/// Dataset split a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    /// Whether records of this split must carry a gold claim.
    pub fn requires_claim(self) -> bool {
        !matches!(self, Split::Test)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::UnknownSplit(other.to_string())),
        }
    }
}

/// On-disk dataset layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// Guess the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Format::Csv),
            "jsonl" | "ndjson" => Some(Format::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for Format {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

/// A raw social-media post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub language: String,
    pub text: String,
    pub split: Split,
}

/// A post together with its gold normalized claim.
#[derive(Debug, Clone, PartialEq)]
pub struct PostClaimPair {
    pub post: Post,
    /// Absent only for test-split records.
    pub claim: Option<String>,
    /// Token recall of the claim against the post, once computed.
    pub recall_score: Option<f64>,
}

impl PostClaimPair {
    pub fn id(&self) -> &str {
        &self.post.id
    }

    pub fn claim_text(&self) -> Option<&str> {
        self.claim.as_deref()
    }
}

/// Surface statistics of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_records: usize,
    pub avg_post_len: f64,
    /// `None` when no record carries a claim (zero-shot test data).
    pub avg_claim_len: Option<f64>,
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let claim = match self.avg_claim_len {
            Some(v) => format!("{v:.2}"),
            None => "-".to_string(),
        };
        write!(
            f,
            "records: {}\navg post length: {:.2}\navg claim length: {}",
            self.n_records, self.avg_post_len, claim
        )
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("row {row}, column `{column}`: {message}")]
    Malformed {
        row: usize,
        column: String,
        message: String,
    },
    #[error("unknown language code `{0}`")]
    UnknownLanguage(String),
    #[error("unknown split `{0}`")]
    UnknownSplit(String),
    #[error("unknown dataset format `{0}`")]
    UnknownFormat(String),
    #[error("cannot compute statistics over an empty record list")]
    NoRecords,
    #[error("write failed: {0}")]
    Write(#[from] io::Error),
}

impl CorpusError {
    fn malformed(row: usize, column: &str, message: impl Into<String>) -> Self {
        CorpusError::Malformed {
            row,
            column: column.to_string(),
            message: message.into(),
        }
    }
}

/// The twenty shared-task languages, under both ISO 639-1 and 639-3 codes.
const TASK_LANGUAGES: &[&str] = &[
    "ar", "ara", "de", "deu", "en", "eng", "fr", "fra", "hi", "hin", "mr", "mar", "id", "ind",
    "msa", "pa", "pan", "pl", "pol", "pt", "por", "es", "spa", "ta", "tam", "th", "tha", "bn",
    "ben", "cs", "ces", "el", "ell", "ko", "kor", "nl", "nld", "ro", "ron", "te", "tel",
];

/// Accepted language codes: the task languages plus anything registered.
#[derive(Debug, Clone)]
pub struct LanguageRegistry {
    codes: BTreeSet<String>,
}

impl Default for LanguageRegistry {
    fn default() -> Self {
        Self {
            codes: TASK_LANGUAGES.iter().map(|c| c.to_string()).collect(),
        }
    }
}

impl LanguageRegistry {
    pub fn register(&mut self, code: &str) {
        self.codes.insert(code.to_ascii_lowercase());
    }

    pub fn contains(&self, code: &str) -> bool {
        self.codes.contains(&code.to_ascii_lowercase())
    }

    pub fn check(&self, code: &str) -> Result<(), CorpusError> {
        if self.contains(code) {
            Ok(())
        } else {
            Err(CorpusError::UnknownLanguage(code.to_string()))
        }
    }
}

/// Load a dataset file, accepting only the task languages.
pub fn load_dataset(
    path: &Path,
    format: Format,
    language: &str,
    split: Split,
) -> Result<Vec<PostClaimPair>, CorpusError> {
    load_dataset_with(path, format, language, split, &LanguageRegistry::default())
}

pub fn load_dataset_with(
    path: &Path,
    format: Format,
    language: &str,
    split: Split,
    registry: &LanguageRegistry,
) -> Result<Vec<PostClaimPair>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_dataset(file, format, language, split, registry).map_err(|e| match e {
        CorpusError::Write(source) => CorpusError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Parse a dataset from any reader.
pub fn read_dataset<R: Read>(
    reader: R,
    format: Format,
    language: &str,
    split: Split,
    registry: &LanguageRegistry,
) -> Result<Vec<PostClaimPair>, CorpusError> {
    registry.check(language)?;
    let rows = match format {
        Format::Csv => read_csv_rows(reader)?,
        Format::Jsonl => read_jsonl_rows(reader)?,
    };
    if rows.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    rows.into_iter()
        .enumerate()
        .map(|(index, row)| row.into_pair(index, language, split))
        .collect()
}

/// A record as found in the file, before validation.
struct RawRow {
    /// 1-based record number (CSV) or line number (JSONL), for errors.
    row: usize,
    id: Option<String>,
    post: Option<String>,
    claim: Option<String>,
    recall_score: Option<f64>,
    post_column: &'static str,
    claim_column: &'static str,
}

impl RawRow {
    fn into_pair(
        self,
        index: usize,
        language: &str,
        split: Split,
    ) -> Result<PostClaimPair, CorpusError> {
        let text = self
            .post
            .ok_or_else(|| CorpusError::malformed(self.row, self.post_column, "missing field"))?;
        if text.trim().is_empty() {
            return Err(CorpusError::malformed(
                self.row,
                self.post_column,
                "post text is empty",
            ));
        }
        let claim = self.claim.filter(|c| !c.trim().is_empty());
        if claim.is_none() && split.requires_claim() {
            return Err(CorpusError::malformed(
                self.row,
                self.claim_column,
                format!("claim is required for the {split} split"),
            ));
        }
        if let Some(score) = self.recall_score {
            if !(0.0..=1.0).contains(&score) {
                return Err(CorpusError::malformed(
                    self.row,
                    "recall_score",
                    format!("{score} is outside [0, 1]"),
                ));
            }
        }
        let id = self
            .id
            .filter(|id| !id.is_empty())
            .unwrap_or_else(|| format!("{language}-{split}-{index}"));
        Ok(PostClaimPair {
            post: Post {
                id,
                language: language.to_string(),
                text,
                split,
            },
            claim,
            recall_score: self.recall_score,
        })
    }
}

const CSV_POST: &str = "post";
const CSV_CLAIM: &str = "normalized claim";

fn read_csv_rows<R: Read>(reader: R) -> Result<Vec<RawRow>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(csv_error(e, 0)),
    };
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(CorpusError::EmptyDataset);
    }
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let post_col =
        find(CSV_POST).ok_or_else(|| CorpusError::malformed(0, CSV_POST, "missing column"))?;
    let claim_col = find(CSV_CLAIM);
    let id_col = find("id");

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_error(e, row))?;
        rows.push(RawRow {
            row,
            id: id_col.and_then(|c| record.get(c)).map(str::to_string),
            post: record.get(post_col).map(str::to_string),
            claim: claim_col.and_then(|c| record.get(c)).map(str::to_string),
            recall_score: None,
            post_column: CSV_POST,
            claim_column: CSV_CLAIM,
        });
    }
    Ok(rows)
}

fn csv_error(e: csv::Error, row: usize) -> CorpusError {
    let message = e.to_string();
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CorpusError::Write(source),
        csv::ErrorKind::Utf8 { pos, .. } => CorpusError::malformed(
            pos.map(|p| p.record() as usize).unwrap_or(row),
            "*",
            "invalid UTF-8",
        ),
        _ => CorpusError::malformed(row, "*", message),
    }
}

/// JSONL record shape written by [`write_jsonl`].
#[derive(Debug, Serialize)]
struct PairRecord<'a> {
    id: &'a str,
    language: &'a str,
    split: Split,
    post: &'a str,
    claim: Option<&'a str>,
    recall_score: Option<f64>,
}

fn read_jsonl_rows<R: Read>(reader: R) -> Result<Vec<RawRow>, CorpusError> {
    use serde_json::Value;

    let mut rows = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| {
            if e.kind() == io::ErrorKind::InvalidData {
                CorpusError::malformed(row, "*", "invalid UTF-8")
            } else {
                CorpusError::Write(e)
            }
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line)
            .map_err(|e| CorpusError::malformed(row, "*", e.to_string()))?;
        let Value::Object(mut object) = value else {
            return Err(CorpusError::malformed(row, "*", "expected a JSON object"));
        };
        let mut text_field = |name: &str| -> Result<Option<String>, CorpusError> {
            match object.remove(name) {
                None | Some(Value::Null) => Ok(None),
                Some(Value::String(s)) => Ok(Some(s)),
                Some(other) => Err(CorpusError::malformed(
                    row,
                    name,
                    format!("expected a string, found {other}"),
                )),
            }
        };
        let post = text_field("post")?;
        let claim = text_field("claim")?;
        let id = match object.remove("id") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s),
            Some(Value::Number(n)) => Some(n.to_string()),
            Some(other) => {
                return Err(CorpusError::malformed(
                    row,
                    "id",
                    format!("expected a string or number, found {other}"),
                ))
            }
        };
        let recall_score = match object.remove("recall_score") {
            None | Some(Value::Null) => None,
            Some(Value::Number(n)) => n.as_f64(),
            Some(other) => {
                return Err(CorpusError::malformed(
                    row,
                    "recall_score",
                    format!("expected a number, found {other}"),
                ))
            }
        };
        rows.push(RawRow {
            row,
            id,
            post,
            claim,
            recall_score,
            post_column: "post",
            claim_column: "claim",
        });
    }
    Ok(rows)
}

/// Write pairs as JSONL with fields id, language, split, post, claim and
/// recall_score.
pub fn write_jsonl<W: Write>(pairs: &[PostClaimPair], mut writer: W) -> Result<(), CorpusError> {
    for pair in pairs {
        let record = PairRecord {
            id: &pair.post.id,
            language: &pair.post.language,
            split: pair.post.split,
            post: &pair.post.text,
            claim: pair.claim.as_deref(),
            recall_score: pair.recall_score,
        };
        serde_json::to_writer(&mut writer, &record).map_err(io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Mean whitespace-token lengths of posts and claims.
pub fn dataset_stats(pairs: &[PostClaimPair]) -> Result<CorpusStats, CorpusError> {
    if pairs.is_empty() {
        return Err(CorpusError::NoRecords);
    }
    let post_total: usize = pairs.iter().map(|p| word_count(&p.post.text)).sum();
    let claim_lens: Vec<usize> = pairs
        .iter()
        .filter_map(|p| p.claim.as_deref())
        .map(word_count)
        .collect();
    let avg_claim_len = if claim_lens.is_empty() {
        None
    } else {
        Some(claim_lens.iter().sum::<usize>() as f64 / claim_lens.len() as f64)
    };
    Ok(CorpusStats {
        n_records: pairs.len(),
        avg_post_len: post_total as f64 / pairs.len() as f64,
        avg_claim_len,
    })
}
