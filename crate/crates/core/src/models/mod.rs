//! Classifier families behind a single fit / predict contract.
//!
//! Segment-level families (LR, SVM, MLP) treat each row of a cough's `S x D`
//! feature matrix as an example and average per-segment probabilities at
//! prediction time. Matrix families (CNN, LSTM, ResNet) consume the whole
//! matrix as an image or a sequence and emit one probability per cough.
//!
//! All networks are trained from scratch by mini-batch gradient descent on
//! hand-written backward passes; [`gradient_check`] compares those against
//! central finite differences.

mod gradcheck;
mod io;
pub mod layers;
pub mod nets;
pub mod resnet;
mod train;

use std::fmt;
use std::ops::ControlFlow;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{derive_seed, Matrix, Rng};
pub use gradcheck::{gradient_check, GradCheck, GRADCHECK_STEP};
pub use io::{load_model, model_from_bytes, model_to_bytes, save_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};
use layers::sigmoid;
use nets::{CnnNet, LinearLoss, LinearNet, LstmNet, MlpNet, Network};
pub use resnet::{ResNet, ResNetPreset, ShapeTrace};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("training data needs both classes ({positives} positive, {negatives} negative)")]
    MissingClass { positives: usize, negatives: usize },
    #[error("model file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
}

fn shape_err(expected: impl fmt::Display, got: impl fmt::Display) -> ModelError {
    ModelError::Shape { expected: expected.to_string(), got: got.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    LR,
    SVM,
    MLP,
    CNN,
    LSTM,
    ResNet,
}

impl Family {
    pub const ALL: [Family; 6] = [Family::LR, Family::SVM, Family::MLP, Family::CNN, Family::LSTM, Family::ResNet];

    /// Whether each segment (matrix row) is its own training example.
    pub fn segment_level(self) -> bool {
        matches!(self, Family::LR | Family::SVM | Family::MLP)
    }

    pub fn tag(self) -> u32 {
        self as u32
    }

    pub fn from_tag(tag: u32) -> Option<Family> {
        Family::ALL.get(tag as usize).copied()
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

macro_rules! defaults {
    ($name:ident { $($field:ident : $val:expr),* $(,)? }) => {
        impl Default for $name {
            fn default() -> Self {
                Self { $($field: $val),* }
            }
        }
    };
}

/// Logistic regression. `strength` is ν1 (inverse: larger means weaker
/// regularisation), `l1_penalty`/`l2_penalty` are ν2/ν3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrParams {
    pub strength: f64,
    pub l1_penalty: f64,
    pub l2_penalty: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}
defaults!(LrParams { strength: 1.0, l1_penalty: 0.0, l2_penalty: 1.0, learning_rate: 0.1, epochs: 50, batch_size: 64 });

/// Linear soft-margin SVM; `strength` is ν1 (the usual C).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmParams {
    pub strength: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}
defaults!(SvmParams { strength: 1.0, learning_rate: 0.01, epochs: 50, batch_size: 64 });

/// `hidden_units` is η, `l2_penalty` ζ1 and `learning_rate` ζ2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden_units: usize,
    pub l2_penalty: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}
defaults!(MlpParams { hidden_units: 20, l2_penalty: 1e-4, learning_rate: 0.05, epochs: 50, batch_size: 64 });

/// α1 filters, α2 kernel, α3 dropout, α4 dense units, ξ1 batch size, ξ2 epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnParams {
    pub filters: usize,
    pub kernel_size: usize,
    pub dropout: f64,
    pub dense_units: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}
defaults!(CnnParams { filters: 24, kernel_size: 2, dropout: 0.1, dense_units: 16, batch_size: 64, epochs: 10, learning_rate: 0.01 });

/// β1 units, β2 learning rate, α3 dropout, α4 dense units, ξ1, ξ2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmParams {
    pub units: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub dense_units: usize,
    pub batch_size: usize,
    pub epochs: usize,
}
defaults!(LstmParams { units: 64, learning_rate: 0.01, dropout: 0.1, dense_units: 16, batch_size: 64, epochs: 10 });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResNetParams {
    pub preset: ResNetPreset,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}
defaults!(ResNetParams { preset: ResNetPreset::Tiny, batch_size: 64, epochs: 10, learning_rate: 0.01 });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum ModelSpec {
    LR(LrParams),
    SVM(SvmParams),
    MLP(MlpParams),
    CNN(CnnParams),
    LSTM(LstmParams),
    ResNet(ResNetParams),
}

/// Shared optimisation settings of a spec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

fn pow10(range: std::ops::RangeInclusive<i32>) -> Vec<f64> {
    range.map(|i| format!("1e{i}").parse().unwrap()).collect()
}

/// `0.05, 0.10, ..., 1.0` (or from 0 when `with_zero`), exact to the printed decimal.
fn twentieths(with_zero: bool) -> Vec<f64> {
    let start = if with_zero { 0 } else { 1 };
    (start..=20).map(|k| k as f64 / 20.0).collect()
}

impl ModelSpec {
    pub fn family(&self) -> Family {
        match self {
            ModelSpec::LR(_) => Family::LR,
            ModelSpec::SVM(_) => Family::SVM,
            ModelSpec::MLP(_) => Family::MLP,
            ModelSpec::CNN(_) => Family::CNN,
            ModelSpec::LSTM(_) => Family::LSTM,
            ModelSpec::ResNet(_) => Family::ResNet,
        }
    }

    pub fn default_for(family: Family) -> ModelSpec {
        match family {
            Family::LR => ModelSpec::LR(LrParams::default()),
            Family::SVM => ModelSpec::SVM(SvmParams::default()),
            Family::MLP => ModelSpec::MLP(MlpParams::default()),
            Family::CNN => ModelSpec::CNN(CnnParams::default()),
            Family::LSTM => ModelSpec::LSTM(LstmParams::default()),
            Family::ResNet => ModelSpec::ResNet(ResNetParams::default()),
        }
    }

    pub fn schedule(&self) -> Schedule {
        let (learning_rate, epochs, batch_size) = match self {
            ModelSpec::LR(p) => (p.learning_rate, p.epochs, p.batch_size),
            ModelSpec::SVM(p) => (p.learning_rate, p.epochs, p.batch_size),
            ModelSpec::MLP(p) => (p.learning_rate, p.epochs, p.batch_size),
            ModelSpec::CNN(p) => (p.learning_rate, p.epochs, p.batch_size),
            ModelSpec::LSTM(p) => (p.learning_rate, p.epochs, p.batch_size),
            ModelSpec::ResNet(p) => (p.learning_rate, p.epochs, p.batch_size),
        };
        Schedule { learning_rate, epochs, batch_size }
    }

    pub fn with_schedule(mut self, epochs: usize, batch_size: usize, learning_rate: f64) -> Self {
        macro_rules! set {
            ($p:ident) => {{
                $p.epochs = epochs;
                $p.batch_size = batch_size;
                $p.learning_rate = learning_rate;
            }};
        }
        match &mut self {
            ModelSpec::LR(p) => set!(p),
            ModelSpec::SVM(p) => set!(p),
            ModelSpec::MLP(p) => set!(p),
            ModelSpec::CNN(p) => set!(p),
            ModelSpec::LSTM(p) => set!(p),
            ModelSpec::ResNet(p) => set!(p),
        }
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidSpec(format!("{}: {m}", self.family())));
        let s = self.schedule();
        if !(s.learning_rate.is_finite() && s.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if s.epochs == 0 || s.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1");
        }
        let rate_ok = |r: f64| (0.0..1.0).contains(&r);
        match self {
            ModelSpec::LR(p) if !(p.strength > 0.0 && p.l1_penalty >= 0.0 && p.l2_penalty >= 0.0) => {
                bad("strength must be positive and penalties non-negative")
            }
            ModelSpec::SVM(p) if !(p.strength > 0.0) => bad("strength must be positive"),
            ModelSpec::MLP(p) if p.hidden_units == 0 || !(p.l2_penalty >= 0.0) => bad("need hidden units and l2_penalty >= 0"),
            ModelSpec::CNN(p) if p.filters == 0 || p.kernel_size == 0 || p.dense_units == 0 || !rate_ok(p.dropout) => {
                bad("filters, kernel_size, dense_units must be positive and dropout in [0, 1)")
            }
            ModelSpec::LSTM(p) if p.units == 0 || p.dense_units == 0 || !rate_ok(p.dropout) => {
                bad("units and dense_units must be positive and dropout in [0, 1)")
            }
            _ => Ok(()),
        }
    }

    /// Cartesian grid over the published hyperparameter ranges for `family`.
    /// Families without tuned epochs/batch sizes keep their defaults.
    pub fn published_grid(family: Family) -> Vec<ModelSpec> {
        let mut out = Vec::new();
        let batches = [64, 128, 256];
        let epochs = [10, 20];
        let dropouts = [0.1, 0.3, 0.5];
        let dense = [16, 32];
        match family {
            Family::LR => {
                for &strength in &pow10(-7..=7) {
                    for &l1_penalty in &twentieths(true) {
                        for &l2_penalty in &twentieths(true) {
                            out.push(ModelSpec::LR(LrParams { strength, l1_penalty, l2_penalty, ..Default::default() }));
                        }
                    }
                }
            }
            Family::SVM => {
                for &strength in &pow10(-7..=7) {
                    out.push(ModelSpec::SVM(SvmParams { strength, ..Default::default() }));
                }
            }
            Family::MLP => {
                for hidden_units in (10..=100).step_by(10) {
                    for &l2_penalty in &pow10(-7..=7) {
                        for &learning_rate in &twentieths(false) {
                            out.push(ModelSpec::MLP(MlpParams { hidden_units, l2_penalty, learning_rate, ..Default::default() }));
                        }
                    }
                }
            }
            Family::CNN => {
                for &batch_size in &batches {
                    for &ep in &epochs {
                        for &filters in &[24, 48, 96] {
                            for &kernel_size in &[2, 3] {
                                for &dropout in &dropouts {
                                    for &dense_units in &dense {
                                        out.push(ModelSpec::CNN(CnnParams {
                                            filters,
                                            kernel_size,
                                            dropout,
                                            dense_units,
                                            batch_size,
                                            epochs: ep,
                                            ..Default::default()
                                        }));
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Family::LSTM => {
                for &batch_size in &batches {
                    for &ep in &epochs {
                        for &dropout in &dropouts {
                            for &dense_units in &dense {
                                for &units in &[64, 128, 256] {
                                    for &learning_rate in &[1e-2, 1e-3, 1e-4] {
                                        out.push(ModelSpec::LSTM(LstmParams {
                                            units,
                                            learning_rate,
                                            dropout,
                                            dense_units,
                                            batch_size,
                                            epochs: ep,
                                        }));
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Family::ResNet => {
                for &batch_size in &batches {
                    for &ep in &epochs {
                        out.push(ModelSpec::ResNet(ResNetParams { batch_size, epochs: ep, ..Default::default() }));
                    }
                }
            }
        }
        out
    }

    /// Whether every tuned value lies inside its published range.
    pub fn within_published_ranges(&self) -> bool {
        let in01 = |v: f64| (0.0..=1.0).contains(&v);
        let pow_ok = |v: f64, lo: f64, hi: f64| v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12);
        let nn_ok = |b: usize, e: usize, d: f64, a4: usize| {
            [64, 128, 256].contains(&b) && (10..=20).contains(&e) && (0.1..=0.5 + 1e-12).contains(&d) && [16, 32].contains(&a4)
        };
        match self {
            ModelSpec::LR(p) => pow_ok(p.strength, 1e-7, 1e7) && in01(p.l1_penalty) && in01(p.l2_penalty),
            ModelSpec::SVM(p) => pow_ok(p.strength, 1e-7, 1e7),
            ModelSpec::MLP(p) => {
                (10..=100).contains(&p.hidden_units) && pow_ok(p.l2_penalty, 1e-7, 1e7) && p.learning_rate > 0.0 && p.learning_rate <= 1.0
            }
            ModelSpec::CNN(p) => [24, 48, 96].contains(&p.filters) && [2, 3].contains(&p.kernel_size) && nn_ok(p.batch_size, p.epochs, p.dropout, p.dense_units),
            ModelSpec::LSTM(p) => {
                [64, 128, 256].contains(&p.units) && pow_ok(p.learning_rate, 1e-4, 1e-2) && nn_ok(p.batch_size, p.epochs, p.dropout, p.dense_units)
            }
            ModelSpec::ResNet(p) => [64, 128, 256].contains(&p.batch_size) && (10..=20).contains(&p.epochs),
        }
    }

    fn dropout(&self) -> f64 {
        match self {
            ModelSpec::CNN(p) => p.dropout,
            ModelSpec::LSTM(p) => p.dropout,
            _ => 0.0,
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let json = serde_json::to_string(self).map_err(|_| fmt::Error)?;
        f.write_str(&json)
    }
}

/// Feature matrix geometry a model was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub segments: usize,
    pub dims: usize,
}

impl fmt::Display for InputShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.segments, self.dims)
    }
}

pub(crate) fn build_network(spec: &ModelSpec, shape: InputShape) -> Result<Arc<dyn Network>, ModelError> {
    spec.validate()?;
    let InputShape { segments: s, dims: d } = shape;
    if s == 0 || d == 0 {
        return Err(shape_err("non-empty input", shape));
    }
    Ok(match spec {
        ModelSpec::LR(p) => Arc::new(LinearNet { dim: d, loss: LinearLoss::Logistic { c: p.strength, l1: p.l1_penalty, l2: p.l2_penalty } }),
        ModelSpec::SVM(p) => Arc::new(LinearNet { dim: d, loss: LinearLoss::Hinge { c: p.strength } }),
        ModelSpec::MLP(p) => Arc::new(MlpNet::new(d, p.hidden_units, p.l2_penalty)),
        ModelSpec::CNN(p) => Arc::new(
            CnnNet::new(s, d, p.filters, p.kernel_size, p.dropout, p.dense_units)
                .ok_or_else(|| shape_err(format!("at least {0}x{0} after a {1}x{1} convolution", 2, p.kernel_size), shape))?,
        ),
        ModelSpec::LSTM(p) => Arc::new(LstmNet::new(s, d, p.units, p.dropout, p.dense_units)),
        ModelSpec::ResNet(p) => {
            Arc::new(ResNet::new(p.preset, s, d).ok_or_else(|| shape_err(format!("input large enough for {:?}", p.preset), shape))?)
        }
    })
}

/// Per-dimension standardisation fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Column statistics over every row of every input; zero-variance
    /// columns get unit scale.
    pub fn fit(inputs: &[&Matrix]) -> Standardizer {
        let d = inputs[0].cols();
        let mut n = 0usize;
        let mut mean = vec![0.0; d];
        for m in inputs {
            for row in m.row_iter() {
                n += 1;
                for (acc, v) in mean.iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }
        mean.iter_mut().for_each(|v| *v /= n as f64);
        let mut var = vec![0.0; d];
        for m in inputs {
            for row in m.row_iter() {
                for ((acc, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                    *acc += (v - mu) * (v - mu);
                }
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n as f64).sqrt();
                if s > 1e-12 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn identity(dims: usize) -> Standardizer {
        Standardizer { mean: vec![0.0; dims], std: vec![1.0; dims] }
    }

    pub fn apply_row(&self, row: &[f64], out: &mut Vec<f64>) {
        out.extend(row.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s));
    }

    pub fn apply(&self, m: &Matrix) -> Vec<f64> {
        let mut out = Vec::with_capacity(m.rows() * m.cols());
        for row in m.row_iter() {
            self.apply_row(row, &mut out);
        }
        out
    }
}

/// Sigmoid calibration `P = sigmoid(a * score + b)`; identity for
/// probabilistic families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub a: f64,
    pub b: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration { a: 1.0, b: 0.0 }
    }
}

impl Calibration {
    pub fn probability(&self, score: f64) -> f64 {
        sigmoid(self.a * score + self.b)
    }
}

#[derive(Clone)]
pub struct TrainedModel {
    spec: ModelSpec,
    shape: InputShape,
    seed: u64,
    standardizer: Standardizer,
    calibration: Calibration,
    params: Vec<f64>,
    loss_trace: Vec<f64>,
    net: Arc<dyn Network>,
}

impl fmt::Debug for TrainedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrainedModel")
            .field("spec", &self.spec)
            .field("shape", &self.shape)
            .field("seed", &self.seed)
            .field("n_params", &self.params.len())
            .field("epochs_run", &self.loss_trace.len())
            .finish()
    }
}

impl TrainedModel {
    /// A model with freshly initialised parameters (no training).
    pub fn untrained(spec: &ModelSpec, shape: InputShape, seed: u64) -> Result<TrainedModel, ModelError> {
        let net = build_network(spec, shape)?;
        let params = net.init(&mut Rng::new(derive_seed(seed, &[INIT_STREAM])));
        Ok(TrainedModel {
            spec: spec.clone(),
            shape,
            seed,
            standardizer: Standardizer::identity(shape.dims),
            calibration: Calibration::default(),
            params,
            loss_trace: Vec::new(),
            net,
        })
    }

    pub(crate) fn from_parts(
        spec: ModelSpec,
        shape: InputShape,
        seed: u64,
        standardizer: Standardizer,
        calibration: Calibration,
        params: Vec<f64>,
        loss_trace: Vec<f64>,
    ) -> Result<TrainedModel, ModelError> {
        let net = build_network(&spec, shape)?;
        if params.len() != net.n_params() || standardizer.mean.len() != shape.dims || standardizer.std.len() != shape.dims {
            return Err(ModelError::Format(format!(
                "parameter/standardizer sizes do not match {} on {shape} ({} params expected, {} found)",
                spec.family(),
                net.n_params(),
                params.len()
            )));
        }
        Ok(TrainedModel { spec, shape, seed, standardizer, calibration, params, loss_trace, net })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn family(&self) -> Family {
        self.spec.family()
    }

    pub fn shape(&self) -> InputShape {
        self.shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn calibration(&self) -> Calibration {
        self.calibration
    }

    /// Mean training loss per epoch (including the regularisation term).
    pub fn loss_trace(&self) -> &[f64] {
        &self.loss_trace
    }

    fn check_input(&self, m: &Matrix) -> Result<(), ModelError> {
        let ok = if self.family().segment_level() {
            m.cols() == self.shape.dims && m.rows() > 0
        } else {
            m.rows() == self.shape.segments && m.cols() == self.shape.dims
        };
        if ok {
            Ok(())
        } else {
            let expected = if self.family().segment_level() { format!("Nx{}", self.shape.dims) } else { self.shape.to_string() };
            Err(shape_err(expected, format!("{}x{}", m.rows(), m.cols())))
        }
    }

    /// Uncalibrated network outputs: one per segment for segment-level
    /// families, a single value otherwise.
    pub fn raw_scores(&self, m: &Matrix) -> Result<Vec<f64>, ModelError> {
        self.check_input(m)?;
        let x = self.standardizer.apply(m);
        Ok(if self.family().segment_level() {
            x.chunks(self.shape.dims).map(|row| self.net.score(&self.params, row)).collect()
        } else {
            vec![self.net.score(&self.params, &x)]
        })
    }

    /// Positive-class probability per segment (κ = S) or per cough (κ = 1).
    pub fn segment_probabilities(&self, m: &Matrix) -> Result<Vec<f64>, ModelError> {
        Ok(self.raw_scores(m)?.into_iter().map(|s| self.calibration.probability(s)).collect())
    }

    /// Per-cough probability `P̂`: the mean of [`Self::segment_probabilities`].
    pub fn predict_proba(&self, m: &Matrix) -> Result<f64, ModelError> {
        let p = self.segment_probabilities(m)?;
        Ok(crate::evaluation::mean_probability(&p))
    }
}

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const DROPOUT_STREAM: u64 = 3;

/// Trains `spec` on labelled feature matrices (`true` = positive).
pub fn fit(spec: &ModelSpec, inputs: &[Matrix], labels: &[bool], seed: u64) -> Result<TrainedModel, ModelError> {
    fit_with_monitor(spec, inputs, labels, seed, |_, _| ControlFlow::Continue(()))
}

/// [`fit`], calling `monitor(epoch, model)` after every epoch; returning
/// `Break` stops training early.
pub fn fit_with_monitor(
    spec: &ModelSpec,
    inputs: &[Matrix],
    labels: &[bool],
    seed: u64,
    mut monitor: impl FnMut(usize, &TrainedModel) -> ControlFlow<()>,
) -> Result<TrainedModel, ModelError> {
    if inputs.len() != labels.len() {
        return Err(shape_err(format!("{} labels", inputs.len()), format!("{} labels", labels.len())));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(ModelError::MissingClass { positives, negatives });
    }
    let shape = InputShape { segments: inputs[0].rows(), dims: inputs[0].cols() };
    if let Some(m) = inputs.iter().find(|m| m.shape() != (shape.segments, shape.dims)) {
        return Err(shape_err(shape, format!("{}x{}", m.rows(), m.cols())));
    }
    let mut model = TrainedModel::untrained(spec, shape, seed)?;
    let refs: Vec<&Matrix> = inputs.iter().collect();
    model.standardizer = Standardizer::fit(&refs);

    let mut examples: Vec<(Vec<f64>, bool)> = Vec::new();
    for (m, &y) in inputs.iter().zip(labels) {
        let x = model.standardizer.apply(m);
        if spec.family().segment_level() {
            examples.extend(x.chunks(shape.dims).map(|r| (r.to_vec(), y)));
        } else {
            examples.push((x, y));
        }
    }

    let schedule = spec.schedule();
    let mut shuffle = Rng::new(derive_seed(seed, &[SHUFFLE_STREAM]));
    let mut drop = (spec.dropout() > 0.0).then(|| Rng::new(derive_seed(seed, &[DROPOUT_STREAM])));
    for epoch in 0..schedule.epochs {
        let loss = train::run_epoch(model.net.as_ref(), &mut model.params, &examples, schedule, &mut shuffle, drop.as_mut())
            .ok_or(ModelError::Diverged { epoch: epoch + 1 })?;
        model.loss_trace.push(loss);
        if monitor(epoch + 1, &model).is_break() {
            break;
        }
    }
    if spec.family() == Family::SVM {
        let scores: Vec<(f64, bool)> = examples.iter().map(|(x, y)| (model.net.score(&model.params, x), *y)).collect();
        model.calibration = train::platt(&scores);
    }
    Ok(model)
}
