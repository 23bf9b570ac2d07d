//! Linear baselines over the flattened lookback window: a point model fitted
//! by closed-form least squares, and a quantile model with one affine head
//! per probability, trained by gradient descent on the pinball loss.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{init_uniform, Differentiable, ModelError, QuantileSet};
use crate::exec;
use crate::features::{WindowSample, WindowedDataset};

pub const DEFAULT_RIDGE_JITTER: f64 = 1e-8;

/// Number of design-vector entries (without intercept): the window's target
/// history plus the flattened predictor history.
fn design_len(lookback: usize, feature_count: usize) -> usize {
    lookback * (feature_count + 1)
}

fn fill_design(sample: &WindowSample<'_>, out: &mut [f64]) {
    let w = sample.target_history.len();
    out[..w].copy_from_slice(sample.target_history);
    out[w..].copy_from_slice(sample.predictor_history);
}

/// Ordinary least squares on the flattened window, solved through the normal
/// equations with a small ridge jitter on the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    lookback: usize,
    feature_count: usize,
    /// Design weights followed by the intercept.
    params: Vec<f64>,
    pub ridge_jitter: f64,
    pub fitted: bool,
}

impl LinearModel {
    pub fn new(lookback: usize, feature_count: usize) -> Self {
        let d = design_len(lookback, feature_count);
        Self {
            lookback,
            feature_count,
            params: vec![0.0; d + 1],
            ridge_jitter: DEFAULT_RIDGE_JITTER,
            fitted: false,
        }
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    /// Closed-form fit: solve (ΦᵀΦ + λI)β = Φᵀy. With `ridge_jitter = 0` a
    /// rank-deficient design raises `SingularSystem`.
    pub fn fit(&mut self, ds: &WindowedDataset) -> Result<(), ModelError> {
        if ds.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let d = design_len(self.lookback, self.feature_count) + 1; // with intercept
        let indices: Vec<usize> = (0..ds.len()).collect();

        // Gram matrix and moment vector accumulated over fixed chunks so the
        // result does not depend on thread count.
        let (gram, moment) = exec::fold_chunks(
            &indices,
            |chunk| {
                let mut g = vec![0.0; d * d];
                let mut b = vec![0.0; d];
                let mut phi = vec![0.0; d];
                for &i in chunk {
                    let sample = ds.sample(i);
                    fill_design(&sample, &mut phi[..d - 1]);
                    phi[d - 1] = 1.0;
                    for r in 0..d {
                        let fr = phi[r];
                        let row = &mut g[r * d..(r + 1) * d];
                        for (slot, fc) in row.iter_mut().zip(&phi) {
                            *slot += fr * fc;
                        }
                    }
                    for (slot, f) in b.iter_mut().zip(&phi) {
                        *slot += f * sample.label;
                    }
                }
                (g, b)
            },
            |(mut g_acc, mut b_acc), (g, b)| {
                for (a, v) in g_acc.iter_mut().zip(&g) {
                    *a += v;
                }
                for (a, v) in b_acc.iter_mut().zip(&b) {
                    *a += v;
                }
                (g_acc, b_acc)
            },
            (vec![0.0; d * d], vec![0.0; d]),
        );

        let mut gram = DMatrix::from_row_slice(d, d, &gram);
        for i in 0..d {
            gram[(i, i)] += self.ridge_jitter;
        }
        let moment = DVector::from_vec(moment);
        let solution = gram
            .cholesky()
            .ok_or(ModelError::SingularSystem)?
            .solve(&moment);
        self.params.copy_from_slice(solution.as_slice());
        self.fitted = true;
        Ok(())
    }
}

impl Differentiable for LinearModel {
    fn param_count(&self) -> usize {
        self.params.len()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn lookback(&self) -> usize {
        self.lookback
    }

    fn feature_count(&self) -> usize {
        self.feature_count
    }

    fn forward(&self, sample: &WindowSample<'_>) -> Vec<f64> {
        let d = self.params.len() - 1;
        let (w, rest) = (sample.target_history, sample.predictor_history);
        let mut acc = self.params[d];
        for (p, v) in self.params[..w.len()].iter().zip(w) {
            acc += p * v;
        }
        for (p, v) in self.params[w.len()..d].iter().zip(rest) {
            acc += p * v;
        }
        vec![acc]
    }

    fn forward_backward(
        &self,
        sample: &WindowSample<'_>,
        _dropout_seed: Option<u64>,
        d_out: &mut dyn FnMut(&[f64]) -> Vec<f64>,
        grad: &mut [f64],
    ) -> Vec<f64> {
        let out = self.forward(sample);
        let d = d_out(&out);
        let d0 = d[0];
        let w = sample.target_history.len();
        let dlen = self.params.len() - 1;
        for (g, v) in grad[..w].iter_mut().zip(sample.target_history) {
            *g += d0 * v;
        }
        for (g, v) in grad[w..dlen].iter_mut().zip(sample.predictor_history) {
            *g += d0 * v;
        }
        grad[dlen] += d0;
        out
    }

    fn mark_fitted(&mut self) {
        self.fitted = true;
    }
}

/// One affine head per quantile over the same flattened window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileLinearModel {
    lookback: usize,
    feature_count: usize,
    pub quantiles: QuantileSet,
    /// Head-major layout: `|Q|` blocks of design weights plus intercept.
    params: Vec<f64>,
    pub fitted: bool,
}

impl QuantileLinearModel {
    pub fn new(lookback: usize, feature_count: usize, quantiles: QuantileSet, seed: u64) -> Self {
        use rand::SeedableRng;
        let d = design_len(lookback, feature_count) + 1;
        let mut params = vec![0.0; quantiles.len() * d];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for head in params.chunks_mut(d) {
            // Leave the intercept at zero; weights get the usual fan-in init.
            init_uniform(&mut rng, d - 1, &mut head[..d - 1]);
        }
        Self {
            lookback,
            feature_count,
            quantiles,
            params,
            fitted: false,
        }
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    fn head_len(&self) -> usize {
        design_len(self.lookback, self.feature_count) + 1
    }
}

impl Differentiable for QuantileLinearModel {
    fn param_count(&self) -> usize {
        self.params.len()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn output_dim(&self) -> usize {
        self.quantiles.len()
    }

    fn lookback(&self) -> usize {
        self.lookback
    }

    fn feature_count(&self) -> usize {
        self.feature_count
    }

    fn forward(&self, sample: &WindowSample<'_>) -> Vec<f64> {
        let d = self.head_len();
        let w = sample.target_history.len();
        self.params
            .chunks(d)
            .map(|head| {
                let mut acc = head[d - 1];
                for (p, v) in head[..w].iter().zip(sample.target_history) {
                    acc += p * v;
                }
                for (p, v) in head[w..d - 1].iter().zip(sample.predictor_history) {
                    acc += p * v;
                }
                acc
            })
            .collect()
    }

    fn forward_backward(
        &self,
        sample: &WindowSample<'_>,
        _dropout_seed: Option<u64>,
        d_out: &mut dyn FnMut(&[f64]) -> Vec<f64>,
        grad: &mut [f64],
    ) -> Vec<f64> {
        let out = self.forward(sample);
        let d = d_out(&out);
        let head_len = self.head_len();
        let w = sample.target_history.len();
        for (h, dh) in d.iter().enumerate() {
            let head = &mut grad[h * head_len..(h + 1) * head_len];
            for (g, v) in head[..w].iter_mut().zip(sample.target_history) {
                *g += dh * v;
            }
            for (g, v) in head[w..head_len - 1]
                .iter_mut()
                .zip(sample.predictor_history)
            {
                *g += dh * v;
            }
            head[head_len - 1] += dh;
        }
        out
    }

    fn mark_fitted(&mut self) {
        self.fitted = true;
    }
}
