//! Seasonal-naive baselines. SN-1 repeats the value observed one hour ago,
//! SN-24 the value observed 24 hours ago.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::features::WindowSample;

/// Next-hour forecast from a raw target history: `y_{t+1} = y_{t+1-lag}`.
pub fn sn_forecast(history: &[f64], lag: usize) -> Result<f64, ModelError> {
    if lag == 0 {
        return Err(ModelError::InvalidHyperparameter("lag must be >= 1".into()));
    }
    if history.len() < lag {
        return Err(ModelError::InsufficientHistory {
            needed: lag,
            got: history.len(),
        });
    }
    Ok(history[history.len() - lag])
}

/// Window adapter around [`sn_forecast`]; exact, no fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalNaive {
    pub lag: usize,
    pub lookback: usize,
    pub feature_count: usize,
    pub fitted: bool,
}

impl SeasonalNaive {
    pub fn new(lag: usize, lookback: usize, feature_count: usize) -> Result<Self, ModelError> {
        if lag == 0 || lag > lookback {
            return Err(ModelError::InvalidHyperparameter(format!(
                "lag {lag} must lie in 1..={lookback}"
            )));
        }
        Ok(Self {
            lag,
            lookback,
            feature_count,
            fitted: true,
        })
    }

    pub fn predict_window(&self, sample: &WindowSample<'_>) -> f64 {
        sample.target_history[sample.target_history.len() - self.lag]
    }
}
