//! Append-only log of finished inner-loop evaluations.
//!
//! The first line is `{"fingerprint": ...}` identifying the run; each further
//! line is one [`UnitRecord`]. A torn final line (from an interrupted write)
//! is ignored on reload.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CrossvalError;

/// `(outer fold, inner split, feature index, model index)`.
pub type UnitKey = (usize, usize, usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum UnitOutcome {
    Scored { auc_i1: f64, auc_i2: f64, gamma: f64 },
    /// Development set lacked one class; contributes nothing.
    Degenerate,
    Diverged { epoch: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub fold: usize,
    pub split: usize,
    pub feature: usize,
    pub model: usize,
    #[serde(flatten)]
    pub outcome: UnitOutcome,
}

impl UnitRecord {
    pub fn key(&self) -> UnitKey {
        (self.fold, self.split, self.feature, self.model)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    fingerprint: String,
}

#[derive(Debug)]
pub struct Checkpoint {
    path: PathBuf,
    file: File,
}

fn ck_err(path: &Path, reason: impl Into<String>) -> CrossvalError {
    CrossvalError::Checkpoint { path: path.display().to_string(), reason: reason.into() }
}

impl Checkpoint {
    /// Opens (or creates) the log and returns the records already present.
    /// A log written for a different run is rejected.
    pub fn open(path: &Path, fingerprint: &str) -> Result<(Checkpoint, HashMap<UnitKey, UnitOutcome>), CrossvalError> {
        let mut done = HashMap::new();
        let exists = path.exists() && std::fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false);
        if exists {
            let reader = BufReader::new(File::open(path).map_err(|e| ck_err(path, e.to_string()))?);
            let mut lines = reader.lines();
            let first = lines.next().transpose().map_err(|e| ck_err(path, e.to_string()))?.unwrap_or_default();
            let header: Header = serde_json::from_str(&first).map_err(|e| ck_err(path, format!("line 1: {e}")))?;
            if header.fingerprint != fingerprint {
                return Err(ck_err(path, "belongs to a different run (fingerprint mismatch)"));
            }
            for line in lines {
                let line = line.map_err(|e| ck_err(path, e.to_string()))?;
                // a torn last line is simply recomputed
                if let Ok(rec) = serde_json::from_str::<UnitRecord>(&line) {
                    done.insert(rec.key(), rec.outcome);
                }
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| ck_err(path, e.to_string()))?;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| ck_err(path, e.to_string()))?;
        if !exists {
            let header = serde_json::to_string(&Header { fingerprint: fingerprint.to_string() }).unwrap();
            writeln!(file, "{header}").map_err(|e| ck_err(path, e.to_string()))?;
        } else {
            // make sure a torn line does not swallow the next record
            let text = std::fs::read(path).map_err(|e| ck_err(path, e.to_string()))?;
            if text.last() != Some(&b'\n') {
                writeln!(file).map_err(|e| ck_err(path, e.to_string()))?;
            }
        }
        Ok((Checkpoint { path: path.to_path_buf(), file }, done))
    }

    pub fn append(&mut self, record: &UnitRecord) -> Result<(), CrossvalError> {
        let line = serde_json::to_string(record).map_err(|e| ck_err(&self.path, e.to_string()))?;
        writeln!(self.file, "{line}").and_then(|_| self.file.flush()).map_err(|e| ck_err(&self.path, e.to_string()))
    }
}
