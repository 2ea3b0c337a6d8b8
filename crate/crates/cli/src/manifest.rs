//! Append-only run manifests and the working-directory lock.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifests.jsonl";
pub const LOCK_FILE: &str = ".claimnorm.lock";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> io::Result<Self> {
        let mut file = File::open(path)?;
        let mut hasher = Sha256::new();
        let mut buf = [0u8; 64 * 1024];
        let mut bytes = 0u64;
        loop {
            let n = file.read(&mut buf)?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
            bytes += n as u64;
        }
        Ok(Self {
            path: path.display().to_string(),
            sha256: hex::encode(hasher.finalize()),
            bytes,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub input: usize,
    pub output: usize,
    pub removed: usize,
    pub dead_lettered: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

/// One line of `manifests.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub status: Status,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
    /// Seed forwarded to the model, if any. Nothing else in the pipeline
    /// draws random numbers.
    pub seed: Option<u64>,
    pub mock_services: bool,
    pub config: PipelineConfig,
    pub inputs: Vec<FileDigest>,
    /// Present only when the stage succeeded.
    pub outputs: Vec<FileDigest>,
    pub counts: Counts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn append_manifest(workdir: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let path = workdir.join(MANIFEST_FILE);
    let mut line = serde_json::to_string(manifest).expect("manifest serializes");
    line.push('\n');
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .and_then(|mut f| f.write_all(line.as_bytes()))
        .map_err(|e| CliError::data(format!("cannot append to {}: {e}", path.display())))
}

pub fn read_manifests(workdir: &Path) -> io::Result<Vec<RunManifest>> {
    let file = File::open(workdir.join(MANIFEST_FILE))?;
    BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| {
            let l = l?;
            serde_json::from_str(&l).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
        })
        .collect()
}

/// Exclusive claim on a working directory, released on drop.
#[derive(Debug)]
pub struct WorkdirLock {
    path: PathBuf,
}

impl WorkdirLock {
    pub fn acquire(workdir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(workdir)
            .map_err(|e| CliError::config(format!("cannot create {}: {e}", workdir.display())))?;
        let path = workdir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(CliError::config(format!(
                "{} is locked by another run (remove {} if it is stale)",
                workdir.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::config(format!("cannot lock {}: {e}", workdir.display()))),
        }
    }
}

impl Drop for WorkdirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
