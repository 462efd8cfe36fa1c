//! In-memory cohorts: decoded audio per patient and extracted feature sets.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use log::warn;
use rayon::prelude::*;

use super::CrossvalError;
use crate::audio_io::{read_wav, AudioClip, Label, PatientRecord};
use crate::features::{read_cached, write_cached, FeatureConfig, FeatureExtractor, FeatureMatrix};
use crate::preprocess::{preprocess, PreprocessError, TrimConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct PatientFeatures {
    pub id: String,
    pub positive: bool,
    pub coughs: Vec<FeatureMatrix>,
}

/// Feature matrices for a cohort under a single extraction config.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    config: Option<FeatureConfig>,
    patients: Vec<PatientFeatures>,
    index: HashMap<String, usize>,
    shape: (usize, usize),
}

impl Dataset {
    /// Requires unique patient ids, at least one cough per patient and a
    /// common matrix shape.
    pub fn new(config: Option<FeatureConfig>, patients: Vec<PatientFeatures>) -> Result<Dataset, CrossvalError> {
        let first = patients
            .iter()
            .flat_map(|p| p.coughs.first())
            .next()
            .ok_or_else(|| CrossvalError::EmptyInput("dataset has no coughs".into()))?;
        let shape = first.values.shape();
        let mut index = HashMap::new();
        for (i, p) in patients.iter().enumerate() {
            if index.insert(p.id.clone(), i).is_some() {
                return Err(CrossvalError::InvalidData(format!("patient {} appears twice", p.id)));
            }
            if p.coughs.is_empty() {
                return Err(CrossvalError::EmptyInput(format!("patient {} has no coughs", p.id)));
            }
            if let Some(c) = p.coughs.iter().find(|c| c.values.shape() != shape) {
                return Err(CrossvalError::InvalidData(format!(
                    "cough {} is {:?}, expected {shape:?}",
                    c.cough_id,
                    c.values.shape()
                )));
            }
        }
        Ok(Dataset { config, patients, index, shape })
    }

    pub fn config(&self) -> Option<&FeatureConfig> {
        self.config.as_ref()
    }

    pub fn patients(&self) -> &[PatientFeatures] {
        &self.patients
    }

    pub fn get(&self, id: &str) -> Option<&PatientFeatures> {
        self.index.get(id).map(|&i| &self.patients[i])
    }

    pub fn require(&self, id: &str) -> Result<&PatientFeatures, CrossvalError> {
        self.get(id).ok_or_else(|| CrossvalError::InvalidData(format!("patient {id} has no features")))
    }

    /// `(id, is_positive)` in dataset order.
    pub fn labels(&self) -> Vec<(String, bool)> {
        self.patients.iter().map(|p| (p.id.clone(), p.positive)).collect()
    }

    /// `(segments, dims)` of every cough matrix.
    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn dim_names(&self) -> Vec<String> {
        self.patients[0].coughs[0].dim_names.clone()
    }

    pub fn n_coughs(&self) -> usize {
        self.patients.iter().map(|p| p.coughs.len()).sum()
    }

    /// Copy with every cough matrix replaced by `f(matrix)`.
    pub fn map_matrices(&self, f: impl Fn(&FeatureMatrix) -> FeatureMatrix) -> Result<Dataset, CrossvalError> {
        let patients = self
            .patients
            .iter()
            .map(|p| PatientFeatures { id: p.id.clone(), positive: p.positive, coughs: p.coughs.iter().map(&f).collect() })
            .collect();
        Dataset::new(self.config.clone(), patients)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientAudio {
    pub id: String,
    pub positive: bool,
    pub clips: Vec<AudioClip>,
}

/// Preprocessed recordings for a cohort.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AudioCorpus {
    pub patients: Vec<PatientAudio>,
}

fn positive_label(record: &PatientRecord) -> Result<bool, CrossvalError> {
    match record.label {
        Label::Unlabeled => Err(CrossvalError::InvalidData(format!("patient {} is unlabeled", record.patient_id))),
        l => Ok(l.is_positive()),
    }
}

impl AudioCorpus {
    /// Reads, normalises and trims every recording. Recordings that are
    /// silent after trimming are dropped with a warning; so are patients
    /// left with none.
    pub fn load(records: &[PatientRecord], trim: &TrimConfig) -> Result<AudioCorpus, CrossvalError> {
        let patients: Vec<Option<PatientAudio>> = records
            .par_iter()
            .map(|r| -> Result<Option<PatientAudio>, CrossvalError> {
                let positive = positive_label(r)?;
                let mut clips = Vec::with_capacity(r.clips.len());
                for path in &r.clips {
                    let clip = read_wav(path)?.with_provenance(r.patient_id.clone(), path.display().to_string(), r.label);
                    match preprocess(&clip, trim) {
                        Ok(c) => clips.push(c),
                        Err(PreprocessError::EmptyAfterTrim(id)) => warn!("skipping silent recording {id}"),
                        Err(e) => return Err(e.into()),
                    }
                }
                if clips.is_empty() {
                    warn!("patient {} has no usable recordings; excluded", r.patient_id);
                    return Ok(None);
                }
                Ok(Some(PatientAudio { id: r.patient_id.clone(), positive, clips }))
            })
            .collect::<Result<_, _>>()?;
        Ok(AudioCorpus { patients: patients.into_iter().flatten().collect() })
    }

    /// Extracts features for every clip, reading and filling the on-disk
    /// cache under `cache_dir` when given.
    pub fn extract(&self, config: &FeatureConfig, cache_dir: Option<&Path>) -> Result<Dataset, CrossvalError> {
        let mut extractors: HashMap<u32, FeatureExtractor> = HashMap::new();
        for p in &self.patients {
            for c in &p.clips {
                if let std::collections::hash_map::Entry::Vacant(e) = extractors.entry(c.sample_rate_hz) {
                    e.insert(FeatureExtractor::new(config, c.sample_rate_hz)?);
                }
            }
        }
        let patients = self
            .patients
            .par_iter()
            .map(|p| -> Result<PatientFeatures, CrossvalError> {
                let coughs = p
                    .clips
                    .iter()
                    .map(|clip| -> Result<FeatureMatrix, CrossvalError> {
                        if let Some(dir) = cache_dir {
                            if let Some(fm) = read_cached(dir, config, &clip.cough_id)? {
                                return Ok(fm);
                            }
                        }
                        let fm = extractors[&clip.sample_rate_hz].extract(clip)?;
                        if let Some(dir) = cache_dir {
                            write_cached(dir, config, &fm)?;
                        }
                        Ok(fm)
                    })
                    .collect::<Result<_, _>>()?;
                Ok(PatientFeatures { id: p.id.clone(), positive: p.positive, coughs })
            })
            .collect::<Result<_, _>>()?;
        Dataset::new(Some(config.clone()), patients)
    }
}

/// Datasets keyed by feature-config hash.
#[derive(Debug, Clone, Default)]
pub struct FeatureStore {
    sets: HashMap<String, Arc<Dataset>>,
}

impl FeatureStore {
    pub fn from_corpus(corpus: &AudioCorpus, configs: &[FeatureConfig], cache_dir: Option<&Path>) -> Result<FeatureStore, CrossvalError> {
        let mut store = FeatureStore::default();
        for cfg in configs {
            if !store.sets.contains_key(&cfg.hash()) {
                store.insert(corpus.extract(cfg, cache_dir)?)?;
            }
        }
        Ok(store)
    }

    /// Datasets must carry their config.
    pub fn insert(&mut self, dataset: Dataset) -> Result<(), CrossvalError> {
        let cfg = dataset.config().ok_or_else(|| CrossvalError::InvalidData("dataset without a feature config".into()))?;
        self.sets.insert(cfg.hash(), Arc::new(dataset));
        Ok(())
    }

    pub fn get(&self, config: &FeatureConfig) -> Result<Arc<Dataset>, CrossvalError> {
        self.sets
            .get(&config.hash())
            .cloned()
            .ok_or_else(|| CrossvalError::MissingFeatures(config.label()))
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}
