//! One self-describing JSON file per cough.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FeatureConfig, FeatureError, FeatureMatrix};
use crate::audio_io::Label;
use crate::numerics::Matrix;

pub const CACHE_FORMAT_VERSION: u32 = 1;
const CACHE_FORMAT_NAME: &str = "coughnet-features";

#[derive(Serialize, Deserialize)]
struct CacheFile {
    format: String,
    version: u32,
    config_hash: String,
    config: FeatureConfig,
    patient_id: String,
    cough_id: String,
    label: Label,
    rows: usize,
    cols: usize,
    dim_names: Vec<String>,
    /// Row-major.
    values: Vec<f64>,
}

fn cache_err(path: &Path, reason: impl Into<String>) -> FeatureError {
    FeatureError::Cache { path: path.display().to_string(), reason: reason.into() }
}

/// File name for a cough under `dir`, keyed by config hash and cough id.
pub fn cache_path(dir: &Path, config: &FeatureConfig, cough_id: &str) -> PathBuf {
    let safe: String = cough_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    dir.join(config.hash()).join(format!("{safe}.json"))
}

pub fn write_cached(dir: &Path, config: &FeatureConfig, fm: &FeatureMatrix) -> Result<PathBuf, FeatureError> {
    let path = cache_path(dir, config, &fm.cough_id);
    let file = CacheFile {
        format: CACHE_FORMAT_NAME.into(),
        version: CACHE_FORMAT_VERSION,
        config_hash: config.hash(),
        config: config.clone(),
        patient_id: fm.patient_id.clone(),
        cough_id: fm.cough_id.clone(),
        label: fm.label,
        rows: fm.values.rows(),
        cols: fm.values.cols(),
        dim_names: fm.dim_names.clone(),
        values: fm.values.as_slice().to_vec(),
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| cache_err(parent, e.to_string()))?;
    }
    let json = serde_json::to_vec(&file).map_err(|e| cache_err(&path, e.to_string()))?;
    std::fs::write(&path, json).map_err(|e| cache_err(&path, e.to_string()))?;
    Ok(path)
}

/// Reads a cached matrix. Returns `Ok(None)` when no entry exists; rejects
/// entries written with another format version or configuration.
pub fn read_cached(dir: &Path, config: &FeatureConfig, cough_id: &str) -> Result<Option<FeatureMatrix>, FeatureError> {
    let path = cache_path(dir, config, cough_id);
    let bytes = match std::fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(cache_err(&path, e.to_string())),
    };
    let file: CacheFile = serde_json::from_slice(&bytes).map_err(|e| cache_err(&path, e.to_string()))?;
    if file.format != CACHE_FORMAT_NAME || file.version != CACHE_FORMAT_VERSION {
        return Err(cache_err(&path, format!("format {} v{} is not {CACHE_FORMAT_NAME} v{CACHE_FORMAT_VERSION}", file.format, file.version)));
    }
    if file.config_hash != config.hash() || file.config != *config {
        return Err(cache_err(&path, "entry was written for a different feature configuration"));
    }
    if file.dim_names.len() != file.cols {
        return Err(cache_err(&path, "dim_names length differs from column count"));
    }
    let values = Matrix::from_vec(file.rows, file.cols, file.values).map_err(|e| cache_err(&path, e.to_string()))?;
    Ok(Some(FeatureMatrix { values, dim_names: file.dim_names, patient_id: file.patient_id, cough_id: file.cough_id, label: file.label }))
}
