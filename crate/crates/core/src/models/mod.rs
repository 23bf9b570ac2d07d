//! The forecasting model zoo behind one interface: seasonal-naive and linear
//! baselines plus the gated-recurrent and dilated-convolutional networks,
//! each with a point head (one output) or a quantile head (one output per
//! quantile in the set).
//!
//! All trainable models keep their parameters in a single flat `Vec<f64>` so
//! the optimizer, the gradient checker, and the checkpoint format can treat
//! them uniformly.

pub mod linear;
pub mod lstm;
mod math;
pub mod seasonal;
pub mod tcn;

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;
use crate::features::{MinMaxScaler, WindowSample, WindowedDataset};

pub use linear::{LinearModel, QuantileLinearModel};
pub use lstm::{LstmModel, RnnHyper};
pub use seasonal::{sn_forecast, SeasonalNaive};
pub use tcn::{CnnHyper, TcnModel};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model is not fitted")]
    NotFitted,
    #[error("window shape mismatch: model expects w={expected_w}, k={expected_k}, got w={got_w}, k={got_k}")]
    ShapeMismatch {
        expected_w: usize,
        expected_k: usize,
        got_w: usize,
        got_k: usize,
    },
    #[error("history of length {got} is shorter than lag {needed}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("normal equations are singular")]
    SingularSystem,
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("model `{0}` is registered but not implemented")]
    UnsupportedModel(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid quantile set: {0}")]
    InvalidQuantileSet(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint schema hash {found} does not match data schema {expected}")]
    SchemaHashMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Strictly increasing quantile probabilities in (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileSet(Vec<f64>);

impl QuantileSet {
    pub fn new(probs: Vec<f64>) -> Result<Self, ModelError> {
        if probs.is_empty() {
            return Err(ModelError::InvalidQuantileSet("empty".into()));
        }
        for pair in probs.windows(2) {
            if pair[0] >= pair[1] {
                return Err(ModelError::InvalidQuantileSet(format!(
                    "not strictly increasing at {} >= {}",
                    pair[0], pair[1]
                )));
            }
        }
        if probs[0] <= 0.0 || *probs.last().unwrap() >= 1.0 {
            return Err(ModelError::InvalidQuantileSet(
                "probabilities must lie in (0, 1)".into(),
            ));
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn position(&self, p: f64) -> Option<usize> {
        self.0.iter().position(|&q| (q - p).abs() < 1e-12)
    }
}

impl Default for QuantileSet {
    fn default() -> Self {
        Self(vec![0.1, 0.5, 0.9])
    }
}

impl TryFrom<Vec<f64>> for QuantileSet {
    type Error = String;
    fn try_from(v: Vec<f64>) -> Result<Self, String> {
        Self::new(v).map_err(|e| e.to_string())
    }
}

impl From<QuantileSet> for Vec<f64> {
    fn from(q: QuantileSet) -> Vec<f64> {
        q.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Point,
    Quantile,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Point => write!(f, "point"),
            Mode::Quantile => write!(f, "quantile"),
        }
    }
}

/// Whether forecast values are still in scaler units or back in physical
/// units. Guards against double inverse-scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Scaled,
    Original,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointForecast {
    pub values: Vec<f64>,
    pub scale: Scale,
}

/// Per-timestep quantile predictions, non-decreasing in p at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileForecast {
    pub quantiles: QuantileSet,
    /// `values[t]` holds one prediction per quantile, sorted ascending.
    pub values: Vec<Vec<f64>>,
    pub scale: Scale,
}

impl QuantileForecast {
    /// The forecast track for one probability of the set.
    pub fn track(&self, p: f64) -> Option<Vec<f64>> {
        let idx = self.quantiles.position(p)?;
        Some(self.values.iter().map(|row| row[idx]).collect())
    }
}

/// A model the gradient-descent trainer and the gradient checker can drive.
///
/// `forward_backward` runs one training-mode forward pass, hands the outputs
/// to `d_out` (which returns dL/doutput), backpropagates, and accumulates
/// parameter gradients into `grad`. `dropout_seed = None` disables dropout,
/// which also makes `forward` and `forward_backward` agree exactly.
pub trait Differentiable: Send + Sync {
    fn param_count(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn output_dim(&self) -> usize;
    fn lookback(&self) -> usize;
    fn feature_count(&self) -> usize;
    fn forward(&self, sample: &WindowSample<'_>) -> Vec<f64>;
    fn forward_backward(
        &self,
        sample: &WindowSample<'_>,
        dropout_seed: Option<u64>,
        d_out: &mut dyn FnMut(&[f64]) -> Vec<f64>,
        grad: &mut [f64],
    ) -> Vec<f64>;
    fn mark_fitted(&mut self);
}

/// Seeded weight init: uniform in ±1/√fan_in, the rows of one weight block
/// drawn in layout order so results are reproducible.
pub(crate) fn init_uniform(rng: &mut ChaCha8Rng, fan_in: usize, out: &mut [f64]) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    for v in out {
        *v = rng.gen_range(-bound..bound);
    }
}

/// Registry names accepted in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Sn1,
    Sn24,
    Lr,
    Qlr,
    Rnn,
    Cnn,
}

impl ModelKind {
    pub fn parse(name: &str) -> Result<Self, ModelError> {
        match name {
            "sn1" => Ok(Self::Sn1),
            "sn24" => Ok(Self::Sn24),
            "lr" => Ok(Self::Lr),
            "qlr" => Ok(Self::Qlr),
            "rnn" => Ok(Self::Rnn),
            "cnn" => Ok(Self::Cnn),
            // Reserved registry slots: recognized, not yet implemented.
            "transformer" | "nhits" | "tft" => Err(ModelError::UnsupportedModel(name.into())),
            other => Err(ModelError::UnknownModel(other.into())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Sn1 => "sn1",
            Self::Sn24 => "sn24",
            Self::Lr => "lr",
            Self::Qlr => "qlr",
            Self::Rnn => "rnn",
            Self::Cnn => "cnn",
        }
    }

    /// Modes each registry entry supports. The neural models carry both a
    /// point and a quantile head variant.
    pub fn modes(&self) -> &'static [Mode] {
        match self {
            Self::Sn1 | Self::Sn24 | Self::Lr => &[Mode::Point],
            Self::Qlr => &[Mode::Quantile],
            Self::Rnn | Self::Cnn => &[Mode::Point, Mode::Quantile],
        }
    }
}

/// A fitted (or buildable) model instance of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Seasonal(SeasonalNaive),
    Linear(LinearModel),
    QuantileLinear(QuantileLinearModel),
    Lstm(LstmModel),
    Tcn(TcnModel),
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Seasonal(m) => {
                if m.lag == 1 {
                    ModelKind::Sn1
                } else {
                    ModelKind::Sn24
                }
            }
            Self::Linear(_) => ModelKind::Lr,
            Self::QuantileLinear(_) => ModelKind::Qlr,
            Self::Lstm(_) => ModelKind::Rnn,
            Self::Tcn(_) => ModelKind::Cnn,
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            Self::Seasonal(_) | Self::Linear(_) => Mode::Point,
            Self::QuantileLinear(_) => Mode::Quantile,
            Self::Lstm(m) => m.mode(),
            Self::Tcn(m) => m.mode(),
        }
    }

    pub fn quantiles(&self) -> Option<&QuantileSet> {
        match self {
            Self::QuantileLinear(m) => Some(&m.quantiles),
            Self::Lstm(m) => m.quantiles.as_ref(),
            Self::Tcn(m) => m.quantiles.as_ref(),
            _ => None,
        }
    }

    pub fn is_fitted(&self) -> bool {
        match self {
            Self::Seasonal(m) => m.fitted,
            Self::Linear(m) => m.fitted,
            Self::QuantileLinear(m) => m.fitted,
            Self::Lstm(m) => m.fitted,
            Self::Tcn(m) => m.fitted,
        }
    }

    pub fn lookback(&self) -> usize {
        match self {
            Self::Seasonal(m) => m.lookback,
            Self::Linear(m) => m.lookback(),
            Self::QuantileLinear(m) => m.lookback(),
            Self::Lstm(m) => m.lookback(),
            Self::Tcn(m) => m.lookback(),
        }
    }

    pub fn feature_count(&self) -> usize {
        match self {
            Self::Seasonal(m) => m.feature_count,
            Self::Linear(m) => m.feature_count(),
            Self::QuantileLinear(m) => m.feature_count(),
            Self::Lstm(m) => m.feature_count(),
            Self::Tcn(m) => m.feature_count(),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Self::Seasonal(_) => &[],
            Self::Linear(m) => m.params(),
            Self::QuantileLinear(m) => m.params(),
            Self::Lstm(m) => m.params(),
            Self::Tcn(m) => m.params(),
        }
    }

    fn params_mut_slice(&mut self) -> &mut [f64] {
        match self {
            Self::Seasonal(_) => &mut [],
            Self::Linear(m) => m.params_mut(),
            Self::QuantileLinear(m) => m.params_mut(),
            Self::Lstm(m) => m.params_mut(),
            Self::Tcn(m) => m.params_mut(),
        }
    }

    pub fn hyperparameters(&self) -> serde_json::Value {
        match self {
            Self::Seasonal(m) => serde_json::json!({ "lag": m.lag }),
            Self::Linear(m) => serde_json::json!({ "ridge_jitter": m.ridge_jitter }),
            Self::QuantileLinear(_) => serde_json::json!({}),
            Self::Lstm(m) => serde_json::to_value(&m.hyper).expect("hyper serializes"),
            Self::Tcn(m) => serde_json::to_value(&m.hyper).expect("hyper serializes"),
        }
    }

    fn forward_scaled(&self, sample: &WindowSample<'_>) -> Vec<f64> {
        match self {
            Self::Seasonal(m) => vec![m.predict_window(sample)],
            Self::Linear(m) => m.forward(sample),
            Self::QuantileLinear(m) => m.forward(sample),
            Self::Lstm(m) => m.forward(sample),
            Self::Tcn(m) => m.forward(sample),
        }
    }

    fn check_shape(&self, ds: &WindowedDataset) -> Result<(), ModelError> {
        if ds.lookback() != self.lookback() || ds.feature_count() != self.feature_count() {
            return Err(ModelError::ShapeMismatch {
                expected_w: self.lookback(),
                expected_k: self.feature_count(),
                got_w: ds.lookback(),
                got_k: ds.feature_count(),
            });
        }
        Ok(())
    }
}

/// One-step-ahead point forecasts for every window, inverse-scaled back to
/// original units.
pub fn predict_point(
    model: &FittedModel,
    ds: &WindowedDataset,
    target_scaler: &MinMaxScaler,
) -> Result<PointForecast, ModelError> {
    if !model.is_fitted() {
        return Err(ModelError::NotFitted);
    }
    if model.mode() != Mode::Point {
        return Err(ModelError::InvalidHyperparameter(
            "model has no point head".into(),
        ));
    }
    model.check_shape(ds)?;
    let values = exec::map_range(ds.len(), |i| {
        let out = model.forward_scaled(&ds.sample(i));
        target_scaler.invert(out[0])
    });
    Ok(PointForecast {
        values,
        scale: Scale::Original,
    })
}

/// Per-quantile forecasts in original units. Crossing quantiles are resolved
/// by sorting the outputs at each timestep.
pub fn predict_quantiles(
    model: &FittedModel,
    ds: &WindowedDataset,
    target_scaler: &MinMaxScaler,
) -> Result<QuantileForecast, ModelError> {
    if !model.is_fitted() {
        return Err(ModelError::NotFitted);
    }
    let quantiles = model
        .quantiles()
        .cloned()
        .ok_or_else(|| ModelError::InvalidHyperparameter("model has no quantile head".into()))?;
    model.check_shape(ds)?;
    let values = exec::map_range(ds.len(), |i| {
        let mut out = model.forward_scaled(&ds.sample(i));
        for v in out.iter_mut() {
            *v = target_scaler.invert(*v);
        }
        out.sort_by(|a, b| a.partial_cmp(b).expect("finite forecasts"));
        out
    });
    Ok(QuantileForecast {
        quantiles,
        values,
        scale: Scale::Original,
    })
}

const CHECKPOINT_VERSION: u32 = 1;

/// Structured-text checkpoint header; the flat little-endian f64 parameter
/// array follows it after one newline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub name: String,
    pub mode: Mode,
    pub hyperparameters: serde_json::Value,
    pub seed: u64,
    pub schema_hash: String,
    #[serde(default)]
    pub quantiles: Vec<f64>,
    pub param_count: u64,
}

pub fn save_checkpoint<W: Write>(
    model: &FittedModel,
    seed: u64,
    schema_hash: &str,
    mut out: W,
) -> Result<(), ModelError> {
    let params = model.params();
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION,
        name: model.kind().name().to_owned(),
        mode: model.mode(),
        hyperparameters: model.hyperparameters(),
        seed,
        schema_hash: schema_hash.to_owned(),
        quantiles: model
            .quantiles()
            .map(|q| q.probs().to_vec())
            .unwrap_or_default(),
        param_count: params.len() as u64,
    };
    let text = serde_json::to_string(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    out.write_all(text.as_bytes())?;
    out.write_all(b"\n")?;
    for v in params {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_checkpoint_file(
    model: &FittedModel,
    seed: u64,
    schema_hash: &str,
    path: impl AsRef<Path>,
) -> Result<(), ModelError> {
    let file = std::fs::File::create(path)?;
    save_checkpoint(model, seed, schema_hash, std::io::BufWriter::new(file))
}

/// Loads a checkpoint, rebuilding the model from its recorded kind and
/// hyperparameters and restoring the flat parameter vector.
pub fn load_checkpoint<R: Read>(
    mut input: R,
    lookback: usize,
    feature_count: usize,
) -> Result<(FittedModel, CheckpointHeader), ModelError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| ModelError::Checkpoint("missing header terminator".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| ModelError::Checkpoint(format!("bad header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let body = &bytes[newline + 1..];
    let expected = header.param_count as usize * 8;
    if body.len() != expected {
        return Err(ModelError::Checkpoint(format!(
            "parameter payload is {} bytes, expected {expected}",
            body.len()
        )));
    }
    let params: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();

    let kind = ModelKind::parse(&header.name)?;
    let quantiles = if header.quantiles.is_empty() {
        None
    } else {
        Some(QuantileSet::new(header.quantiles.clone())?)
    };
    let mut model = build_model(
        kind,
        header.mode,
        &header.hyperparameters,
        quantiles,
        header.seed,
        lookback,
        feature_count,
    )?;
    {
        let slot = model.params_mut_slice();
        if slot.len() != params.len() {
            return Err(ModelError::Checkpoint(format!(
                "parameter count {} does not fit rebuilt model ({})",
                params.len(),
                slot.len()
            )));
        }
        slot.copy_from_slice(&params);
    }
    match &mut model {
        FittedModel::Seasonal(m) => m.fitted = true,
        FittedModel::Linear(m) => m.fitted = true,
        FittedModel::QuantileLinear(m) => m.fitted = true,
        FittedModel::Lstm(m) => m.fitted = true,
        FittedModel::Tcn(m) => m.fitted = true,
    }
    Ok((model, header))
}

pub fn load_checkpoint_file(
    path: impl AsRef<Path>,
    lookback: usize,
    feature_count: usize,
) -> Result<(FittedModel, CheckpointHeader), ModelError> {
    let file = std::fs::File::open(path)?;
    load_checkpoint(std::io::BufReader::new(file), lookback, feature_count)
}

/// Builds an unfitted model of the given kind with seeded initialization.
pub fn build_model(
    kind: ModelKind,
    mode: Mode,
    hyper: &serde_json::Value,
    quantiles: Option<QuantileSet>,
    seed: u64,
    lookback: usize,
    feature_count: usize,
) -> Result<FittedModel, ModelError> {
    let want_quantiles = || quantiles.clone().unwrap_or_default();
    match (kind, mode) {
        (ModelKind::Sn1, Mode::Point) => Ok(FittedModel::Seasonal(SeasonalNaive::new(
            1,
            lookback,
            feature_count,
        )?)),
        (ModelKind::Sn24, Mode::Point) => Ok(FittedModel::Seasonal(SeasonalNaive::new(
            24,
            lookback,
            feature_count,
        )?)),
        (ModelKind::Lr, Mode::Point) => Ok(FittedModel::Linear(LinearModel::new(
            lookback,
            feature_count,
        ))),
        (ModelKind::Qlr, Mode::Quantile) => Ok(FittedModel::QuantileLinear(
            QuantileLinearModel::new(lookback, feature_count, want_quantiles(), seed),
        )),
        (ModelKind::Rnn, _) => {
            let h: RnnHyper = serde_json::from_value(hyper.clone())
                .map_err(|e| ModelError::InvalidHyperparameter(e.to_string()))?;
            let q = (mode == Mode::Quantile).then(want_quantiles);
            Ok(FittedModel::Lstm(LstmModel::new(
                h,
                q,
                lookback,
                feature_count,
                seed,
            )?))
        }
        (ModelKind::Cnn, _) => {
            let h: CnnHyper = serde_json::from_value(hyper.clone())
                .map_err(|e| ModelError::InvalidHyperparameter(e.to_string()))?;
            let q = (mode == Mode::Quantile).then(want_quantiles);
            Ok(FittedModel::Tcn(TcnModel::new(
                h,
                q,
                lookback,
                feature_count,
                seed,
            )?))
        }
        (kind, mode) => Err(ModelError::InvalidHyperparameter(format!(
            "model {} has no {mode} head",
            kind.name()
        ))),
    }
}
