//! TOML run configuration.

use std::path::{Path, PathBuf};

use coughnet::balance::SmoteConfig;
use coughnet::crossval::{SearchGrid, DEFAULT_INNER_SPLITS};
use coughnet::evaluation::ScoreFunction;
use coughnet::features::FeatureConfig;
use coughnet::models::{Family, ModelSpec};
use coughnet::preprocess::TrimConfig;
use coughnet::selection::DEFAULT_SFS_SPLITS;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Default held-out fractions when sizes are not given explicitly
/// (234 and 187 of 1171 patients).
const TEST_FRACTION: f64 = 0.2;
const DEV_FRACTION: f64 = 0.16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    /// Patients held out per outer fold (J).
    pub test_patients: Option<usize>,
    /// Development patients per inner split (K).
    pub dev_patients: Option<usize>,
    pub inner_splits: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self { test_patients: None, dev_patients: None, inner_splits: DEFAULT_INNER_SPLITS }
    }
}

fn fraction_of(n: usize, f: f64) -> usize {
    ((n as f64 * f).round() as usize).max(1)
}

impl PlanConfig {
    pub fn sizes(&self, n_patients: usize) -> (usize, usize) {
        (
            self.test_patients.unwrap_or_else(|| fraction_of(n_patients, TEST_FRACTION)),
            self.dev_patients.unwrap_or_else(|| fraction_of(n_patients, DEV_FRACTION)),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SfsSection {
    /// Fixed model for the search; defaults to the first grid model.
    pub model: Option<ModelSpec>,
    pub max_dims: Option<usize>,
    pub dev_patients: Option<usize>,
    pub splits: usize,
    pub score_function: ScoreFunction,
}

impl Default for SfsSection {
    fn default() -> Self {
        Self { model: None, max_dims: None, dev_patients: None, splits: DEFAULT_SFS_SPLITS, score_function: ScoreFunction::I2 }
    }
}

impl SfsSection {
    pub fn dev_size(&self, n_patients: usize) -> usize {
        self.dev_patients.unwrap_or_else(|| fraction_of(n_patients, DEV_FRACTION))
    }
}

fn default_features() -> Vec<FeatureConfig> {
    vec![FeatureConfig::default()]
}

fn both_scores() -> Vec<ScoreFunction> {
    ScoreFunction::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_features")]
    pub features: Vec<FeatureConfig>,
    #[serde(default)]
    pub models: Vec<ModelSpec>,
    /// Families whose full published grid is appended to `models`.
    #[serde(default)]
    pub published_grid: Vec<Family>,
    #[serde(default = "both_scores")]
    pub score_functions: Vec<ScoreFunction>,
    #[serde(default)]
    pub plan: PlanConfig,
    #[serde(default)]
    pub smote: SmoteConfig,
    pub budget: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub trim: TrimConfig,
    #[serde(default)]
    pub sfs: SfsSection,
}

/// 1-based line of byte `offset` in `text`.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl RunConfig {
    /// Parses `text`; relative paths are resolved against the file's directory.
    pub fn parse(text: &str, path: &Path) -> Result<RunConfig, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.manifest, &mut cfg.cache_dir, &mut cfg.checkpoint].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate(path)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        RunConfig::parse(&text, path)
    }

    fn validate(&self, path: &Path) -> Result<(), CliError> {
        let bad = |message: String| CliError::Config { path: path.to_path_buf(), line: None, message };
        if self.features.is_empty() {
            return Err(bad("at least one [[features]] entry is required".into()));
        }
        for f in &self.features {
            f.validate().map_err(|e| bad(e.to_string()))?;
        }
        for m in &self.models {
            m.validate().map_err(|e| bad(e.to_string()))?;
        }
        if self.score_functions.is_empty() {
            return Err(bad("score_functions must not be empty".into()));
        }
        Ok(())
    }

    /// Explicit models followed by any requested published grids; a lone
    /// default LR when neither is given.
    pub fn grid(&self) -> SearchGrid {
        let mut models = self.models.clone();
        for &family in &self.published_grid {
            models.extend(ModelSpec::published_grid(family));
        }
        if models.is_empty() {
            models.push(ModelSpec::default_for(Family::LR));
        }
        SearchGrid { features: self.features.clone(), models, score_functions: self.score_functions.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config_parses() {
        let text = r#"
manifest = "data/manifest.csv"
score_functions = ["I2"]
published_grid = ["SVM"]

[[features]]
n_mfcc = 13
frame_len = 512
n_segments = 20

[[models]]
family = "LR"
strength = 0.5
epochs = 10

[[models]]
family = "LSTM"
units = 8

[plan]
test_patients = 4
dev_patients = 3

[sfs]
max_dims = 5
model = { family = "MLP", hidden_units = 10 }
"#;
        let cfg = RunConfig::parse(text, Path::new("/runs/a/run.toml")).unwrap();
        assert_eq!(cfg.manifest, Some(PathBuf::from("/runs/a/data/manifest.csv")));
        assert_eq!(cfg.features[0].frame_len, 512);
        let grid = cfg.grid();
        assert_eq!(grid.models.len(), 2 + ModelSpec::published_grid(Family::SVM).len());
        assert_eq!(grid.score_functions, vec![ScoreFunction::I2]);
        assert_eq!(cfg.plan.sizes(100), (4, 3));
        assert_eq!(cfg.sfs.model.unwrap().family(), Family::MLP);
        assert_eq!(cfg.sfs.splits, DEFAULT_SFS_SPLITS);
    }

    #[test]
    fn defaults_and_fractions() {
        let cfg = RunConfig::parse("", Path::new("run.toml")).unwrap();
        assert_eq!(cfg.features, vec![FeatureConfig::default()]);
        assert_eq!(cfg.grid().models, vec![ModelSpec::default_for(Family::LR)]);
        assert_eq!(cfg.plan.sizes(1171), (234, 187));
        assert_eq!(cfg.plan.sizes(10), (2, 2));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "manifest = \"m.csv\"\n\n[[models]]\nfamily = \"LR\"\nstrenght = 2.0\n";
        match RunConfig::parse(text, Path::new("run.toml")) {
            // tagged model tables are reported at their header line
            Err(CliError::Config { line, message, .. }) => {
                assert_eq!(line, Some(3));
                assert!(message.contains("strenght"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let err = RunConfig::parse("[[features]]\nn_mfcc = 0\n", Path::new("run.toml")).unwrap_err();
        assert!(matches!(err, CliError::Config { .. }), "{err}");
    }
}
