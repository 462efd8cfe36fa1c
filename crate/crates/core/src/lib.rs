//! Cough-audio COVID-19 screening toolkit.
//!
//! The pipeline runs: WAV/manifest ingestion ([`audio_io`]), amplitude
//! normalization and silence trimming ([`preprocess`]), per-frame spectral
//! features pooled into fixed segment counts ([`features`]), SMOTE
//! oversampling of the positive class ([`balance`]), six classifier families
//! ([`models`]), ROC/EER evaluation with patient-level indexes
//! ([`evaluation`]), nested leave-p-out cross-validation ([`crossval`]) and
//! sequential forward feature selection ([`selection`]).

pub mod audio_io;
pub mod balance;
pub mod crossval;
pub mod evaluation;
pub mod features;
pub mod models;
pub mod numerics;
pub mod preprocess;
pub mod selection;
pub mod synth;
