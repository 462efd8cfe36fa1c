//! Dataset manifests: `patient_id,cough_path,label[,age,gender,country]`.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AudioError, Label};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PatientMetadata {
    pub age: Option<u32>,
    pub gender: Option<String>,
    pub country: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub label: Label,
    /// Recording paths, resolved against the manifest's directory.
    pub clips: Vec<PathBuf>,
    pub metadata: Option<PatientMetadata>,
}

const REQUIRED: [&str; 3] = ["patient_id", "cough_path", "label"];

fn manifest_err(line: u64, reason: impl Into<String>) -> AudioError {
    AudioError::Manifest { line, reason: reason.into() }
}

fn opt(field: Option<&str>) -> Option<String> {
    field.map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned)
}

/// Parses manifest text. Relative clip paths are joined onto `base_dir`.
/// Patients appear in first-seen order; `#` lines are comments.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Vec<PatientRecord>, AudioError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| manifest_err(1, e.to_string()))?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(manifest_err(1, "missing header"));
    }
    let header_line = reader.position().line().max(1);
    for (i, name) in REQUIRED.iter().enumerate() {
        if headers.get(i).map(str::to_ascii_lowercase).as_deref() != Some(*name) {
            return Err(manifest_err(header_line, format!("header must start with {}", REQUIRED.join(","))));
        }
    }
    let mut order: Vec<PatientRecord> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut seen: HashSet<(String, PathBuf)> = HashSet::new();
    for row in reader.records() {
        let row = row.map_err(|e| manifest_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.iter().all(str::is_empty) {
            continue;
        }
        if row.len() < 3 {
            return Err(manifest_err(line, format!("expected at least 3 fields, found {}", row.len())));
        }
        let patient_id = row[0].to_owned();
        if patient_id.is_empty() {
            return Err(manifest_err(line, "empty patient_id"));
        }
        if row[1].is_empty() {
            return Err(manifest_err(line, "empty cough_path"));
        }
        let label = Label::parse(&row[2]).ok_or_else(|| manifest_err(line, format!("unknown label '{}'", &row[2])))?;
        let path = base_dir.join(&row[1]);
        if !seen.insert((patient_id.clone(), path.clone())) {
            return Err(manifest_err(line, format!("duplicate recording {} for patient {patient_id}", &row[1])));
        }
        let age = match opt(row.get(3)) {
            Some(a) => Some(a.parse::<u32>().map_err(|_| manifest_err(line, format!("invalid age '{a}'")))?),
            None => None,
        };
        let meta = PatientMetadata { age, gender: opt(row.get(4)), country: opt(row.get(5)) };
        let meta = (meta != PatientMetadata::default()).then_some(meta);
        match index.get(&patient_id) {
            Some(&i) => {
                let rec = &mut order[i];
                if rec.label != label {
                    return Err(manifest_err(line, format!("patient {patient_id} labelled both {} and {label}", rec.label)));
                }
                rec.clips.push(path);
                if rec.metadata.is_none() {
                    rec.metadata = meta;
                }
            }
            None => {
                index.insert(patient_id.clone(), order.len());
                order.push(PatientRecord { patient_id, label, clips: vec![path], metadata: meta });
            }
        }
    }
    Ok(order)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<PatientRecord>, AudioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| AudioError::Io { path: path.to_path_buf(), source })?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new("")))
}
