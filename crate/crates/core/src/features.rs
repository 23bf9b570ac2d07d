//! Model input construction: calendar features, cyclical encoding, min-max
//! scaling, and lookback windows.
//!
//! Each hourly row turns into k = 13 predictors: the 6 scaled weather
//! columns, sine/cosine pairs for hour-of-day (period 24) and weekday
//! (period 7, Monday = 0), and the three binary flags is_holiday, is_weekend,
//! is_open. The scaled target history enters each window separately.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::AlignedTable;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("period must be positive, got {0}")]
    NonPositivePeriod(f64),
    #[error("column `{0}` is empty")]
    EmptyColumn(String),
    #[error("no scaler fitted for column `{0}`")]
    NotFitted(String),
    #[error("table is missing column `{0}`")]
    MissingColumn(String),
    #[error("table of length {n} is too short for lookback {w}")]
    TooShort { n: usize, w: usize },
    #[error("opening rule for weekday {0} has open_hour >= close_hour")]
    BadOpeningRule(usize),
    #[error("bad holiday line `{0}`")]
    BadHolidayLine(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-weekday opening hours plus the public-holiday list. Weekday index 0 is
/// Monday. `open_hour` is inclusive, `close_hour` exclusive.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalendarConfig {
    #[serde(default)]
    pub holidays: BTreeSet<NaiveDate>,
    #[serde(default)]
    pub opening_rules: OpeningRules,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OpeningRules(pub [Option<(u32, u32)>; 7]);

impl OpeningRules {
    pub fn validate(&self) -> Result<(), FeatureError> {
        for (wd, rule) in self.0.iter().enumerate() {
            if let Some((open, close)) = rule {
                if open >= close || *close > 24 {
                    return Err(FeatureError::BadOpeningRule(wd));
                }
            }
        }
        Ok(())
    }
}

/// The City Museum schedule: closed Mondays, open 11:00 with closing at
/// 17:00 Tue/Wed/Fri, 20:00 Thu, and 16:00 Sat/Sun.
pub fn museum_opening_rules() -> OpeningRules {
    OpeningRules([
        None,
        Some((11, 17)),
        Some((11, 17)),
        Some((11, 20)),
        Some((11, 17)),
        Some((11, 16)),
        Some((11, 16)),
    ])
}

impl CalendarConfig {
    pub fn load_holidays(&mut self, path: impl AsRef<Path>) -> Result<(), FeatureError> {
        let text = std::fs::read_to_string(path)?;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let date = NaiveDate::parse_from_str(line, "%Y-%m-%d")
                .map_err(|_| FeatureError::BadHolidayLine(line.to_owned()))?;
            self.holidays.insert(date);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalFeatures {
    pub hour: u32,
    pub weekday: u32,
    pub is_holiday: bool,
    pub is_weekend: bool,
    pub is_open: bool,
}

/// Extracts the calendar features of one timestamp. Weekday 0 is Monday,
/// weekend means Saturday or Sunday, is_open follows the opening rules with
/// an exclusive close hour.
pub fn temporal_features(ts: NaiveDateTime, cal: &CalendarConfig) -> TemporalFeatures {
    let hour = ts.hour();
    let weekday = ts.weekday().num_days_from_monday();
    let is_open = cal.opening_rules.0[weekday as usize]
        .map(|(open, close)| hour >= open && hour < close)
        .unwrap_or(false);
    TemporalFeatures {
        hour,
        weekday,
        is_holiday: cal.holidays.contains(&ts.date()),
        is_weekend: weekday >= 5,
        is_open,
    }
}

/// Maps a cyclical value onto the unit circle:
/// `(sin(2π·value/period), cos(2π·value/period))`.
pub fn sine_cosine_encode(value: f64, period: f64) -> Result<(f64, f64), FeatureError> {
    if period <= 0.0 {
        return Err(FeatureError::NonPositivePeriod(period));
    }
    let angle = TAU * value / period;
    Ok((angle.sin(), angle.cos()))
}

/// Per-column min-max transform fitted on training data only. Values outside
/// the training range pass through beyond [0, 1] unclipped. A degenerate
/// column (min = max) maps everything to 0 and inverts to min.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: f64,
    pub max: f64,
}

impl MinMaxScaler {
    pub fn fit(column: &[f64]) -> Result<Self, FeatureError> {
        if column.is_empty() {
            return Err(FeatureError::EmptyColumn(String::new()));
        }
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in column {
            min = min.min(v);
            max = max.max(v);
        }
        Ok(Self { min, max })
    }

    pub fn apply(&self, v: f64) -> f64 {
        if self.max == self.min {
            0.0
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    pub fn invert(&self, u: f64) -> f64 {
        if self.max == self.min {
            self.min
        } else {
            self.min + u * (self.max - self.min)
        }
    }
}

/// Scalers keyed by column name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalerSet {
    pub by_column: BTreeMap<String, MinMaxScaler>,
}

impl ScalerSet {
    pub fn fit_column(&mut self, name: &str, column: &[f64]) -> Result<(), FeatureError> {
        let scaler =
            MinMaxScaler::fit(column).map_err(|_| FeatureError::EmptyColumn(name.to_owned()))?;
        self.by_column.insert(name.to_owned(), scaler);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&MinMaxScaler, FeatureError> {
        self.by_column
            .get(name)
            .ok_or_else(|| FeatureError::NotFitted(name.to_owned()))
    }

    pub fn apply(&self, name: &str, column: &[f64]) -> Result<Vec<f64>, FeatureError> {
        let s = self.get(name)?;
        Ok(column.iter().map(|&v| s.apply(v)).collect())
    }

    pub fn invert(&self, name: &str, column: &[f64]) -> Result<Vec<f64>, FeatureError> {
        let s = self.get(name)?;
        Ok(column.iter().map(|&v| s.invert(v)).collect())
    }
}

/// Identity of the model input layout. Checkpoints embed its hash so that a
/// checkpoint cannot silently be applied to differently prepared data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub lookback: usize,
    pub target: String,
    pub feature_names: Vec<String>,
}

impl FeatureSchema {
    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("schema serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(64);
        for b in digest {
            use std::fmt::Write;
            write!(hex, "{b:02x}").expect("hex write");
        }
        hex
    }
}

/// One split's feature matrix: the scaled target column plus the k predictor
/// columns per row, with row timestamps retained for exports.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub start: NaiveDateTime,
    pub feature_names: Vec<String>,
    pub target_name: String,
    /// Scaled target, one entry per row.
    pub target: Vec<f64>,
    /// Row-major predictors, `len = rows * feature_names.len()`.
    pub predictors: Vec<f64>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.target.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.feature_names.len();
        &self.predictors[i * k..(i + 1) * k]
    }
}

pub const CYCLICAL_BINARY_FEATURES: [&str; 7] = [
    "hour_sin",
    "hour_cos",
    "weekday_sin",
    "weekday_cos",
    "is_holiday",
    "is_weekend",
    "is_open",
];

/// Builds the predictor matrix and scaled target for one split. Weather and
/// target columns are scaled with the supplied (train-fitted) scalers; the
/// cyclical and binary features are appended untransformed.
pub fn build_feature_matrix(
    table: &AlignedTable,
    target_name: &str,
    weather_columns: &[String],
    scalers: &ScalerSet,
    cal: &CalendarConfig,
) -> Result<FeatureMatrix, FeatureError> {
    let target_raw = table
        .column(target_name)
        .ok_or_else(|| FeatureError::MissingColumn(target_name.to_owned()))?;
    let target = scalers.apply(target_name, target_raw)?;

    let mut scaled_weather = Vec::with_capacity(weather_columns.len());
    for name in weather_columns {
        let raw = table
            .column(name)
            .ok_or_else(|| FeatureError::MissingColumn(name.clone()))?;
        scaled_weather.push(scalers.apply(name, raw)?);
    }

    let mut feature_names: Vec<String> = weather_columns.to_vec();
    feature_names.extend(CYCLICAL_BINARY_FEATURES.iter().map(|s| s.to_string()));

    let rows = table.len();
    let k = feature_names.len();
    let mut predictors = Vec::with_capacity(rows * k);
    for row in 0..rows {
        for col in &scaled_weather {
            predictors.push(col[row]);
        }
        let tf = temporal_features(table.timestamp_at(row), cal);
        let (hs, hc) = sine_cosine_encode(tf.hour as f64, 24.0)?;
        let (ws, wc) = sine_cosine_encode(tf.weekday as f64, 7.0)?;
        predictors.extend_from_slice(&[
            hs,
            hc,
            ws,
            wc,
            tf.is_holiday as u8 as f64,
            tf.is_weekend as u8 as f64,
            tf.is_open as u8 as f64,
        ]);
    }

    Ok(FeatureMatrix {
        start: table.start,
        feature_names,
        target_name: target_name.to_owned(),
        target,
        predictors,
    })
}

/// Supervised one-step-ahead samples: `w` rows of history and the target of
/// the row immediately after as the label. All values are in scaled units.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub schema: FeatureSchema,
    /// `samples * w` scaled target history values.
    pub target_history: Vec<f64>,
    /// `samples * w * k` scaled predictor history values.
    pub predictor_history: Vec<f64>,
    pub labels: Vec<f64>,
    pub label_timestamps: Vec<NaiveDateTime>,
}

/// Borrowed view of one sample.
#[derive(Debug, Clone, Copy)]
pub struct WindowSample<'a> {
    /// `w` values, oldest first.
    pub target_history: &'a [f64],
    /// `w * k` values, row-major by time step.
    pub predictor_history: &'a [f64],
    pub label: f64,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn lookback(&self) -> usize {
        self.schema.lookback
    }

    pub fn feature_count(&self) -> usize {
        self.schema.feature_count()
    }

    pub fn sample(&self, i: usize) -> WindowSample<'_> {
        let w = self.lookback();
        let wk = w * self.feature_count();
        WindowSample {
            target_history: &self.target_history[i * w..(i + 1) * w],
            predictor_history: &self.predictor_history[i * wk..(i + 1) * wk],
            label: self.labels[i],
        }
    }
}

/// Slides a lookback window over one split. A matrix of n rows yields exactly
/// n − w samples; windows never cross split boundaries because each split is
/// windowed separately.
pub fn build_windows(matrix: &FeatureMatrix, lookback: usize) -> Result<WindowedDataset, FeatureError> {
    let n = matrix.rows();
    if lookback == 0 || n < lookback + 1 {
        return Err(FeatureError::TooShort { n, w: lookback });
    }
    let k = matrix.feature_names.len();
    let samples = n - lookback;
    let mut target_history = Vec::with_capacity(samples * lookback);
    let mut predictor_history = Vec::with_capacity(samples * lookback * k);
    let mut labels = Vec::with_capacity(samples);
    let mut label_timestamps = Vec::with_capacity(samples);
    for i in 0..samples {
        target_history.extend_from_slice(&matrix.target[i..i + lookback]);
        predictor_history.extend_from_slice(&matrix.predictors[i * k..(i + lookback) * k]);
        labels.push(matrix.target[i + lookback]);
        label_timestamps.push(matrix.start + chrono::Duration::hours((i + lookback) as i64));
    }
    Ok(WindowedDataset {
        schema: FeatureSchema {
            lookback,
            target: matrix.target_name.clone(),
            feature_names: matrix.feature_names.clone(),
        },
        target_history,
        predictor_history,
        labels,
        label_timestamps,
    })
}
