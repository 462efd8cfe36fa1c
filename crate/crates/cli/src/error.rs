use std::path::{Path, PathBuf};

use coughnet::audio_io::AudioError;
use coughnet::balance::BalanceError;
use coughnet::crossval::CrossvalError;
use coughnet::evaluation::EvalError;
use coughnet::models::ModelError;
use coughnet::selection::SelectionError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}{}: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Config { path: PathBuf, line: Option<usize>, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("mean outer AUC {auc:.4} is below the required {required}")]
    BelowTarget { auc: f64, required: f64 },
    #[error(transparent)]
    Crossval(#[from] CrossvalError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
}

/// Machine-readable failure description written to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
}

impl CliError {
    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Usage(_) => "usage",
            CliError::BelowTarget { .. } => "below_target",
            CliError::Crossval(_) => "crossval",
            CliError::Selection(_) => "selection",
            CliError::Model(_) => "model",
            CliError::Audio(_) => "audio",
            CliError::Eval(_) => "evaluation",
            CliError::Balance(_) => "balance",
        }
    }

    pub fn record(&self) -> ErrorRecord {
        let (path, line) = match self {
            CliError::Config { path, line, .. } => (Some(path.clone()), *line),
            CliError::Io { path, .. } => (Some(path.clone()), None),
            CliError::Audio(e) | CliError::Crossval(CrossvalError::Audio(e)) => match e {
                AudioError::Io { path, .. } => (Some(path.clone()), None),
                AudioError::Manifest { line, .. } => (None, Some(*line as usize)),
                _ => (None, None),
            },
            _ => (None, None),
        };
        ErrorRecord { error: self.kind(), message: self.to_string(), path, line }
    }
}
