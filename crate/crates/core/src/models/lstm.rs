//! Stacked gated recurrent network with input/forget/output gates and a cell
//! state, consuming the window step by step; the final hidden state feeds an
//! affine head of size 1 (point) or |Q| (quantile). Forward and
//! backward-through-time passes are hand-rolled over a flat parameter vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::math::{matvec_add, matvec_t_add, outer_add, sigmoid};
use super::{init_uniform, Differentiable, ModelError, QuantileSet};
use crate::features::WindowSample;

fn default_hidden() -> usize {
    64
}
fn default_layers() -> usize {
    1
}
fn default_dropout() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RnnHyper {
    pub hidden_size: usize,
    pub layers: usize,
    pub dropout: f64,
}

impl Default for RnnHyper {
    fn default() -> Self {
        Self {
            hidden_size: default_hidden(),
            layers: default_layers(),
            dropout: default_dropout(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Seg {
    start: usize,
    len: usize,
}

impl Seg {
    fn of<'a>(&self, buf: &'a [f64]) -> &'a [f64] {
        &buf[self.start..self.start + self.len]
    }

    fn of_mut<'a>(&self, buf: &'a mut [f64]) -> &'a mut [f64] {
        &mut buf[self.start..self.start + self.len]
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LayerSegs {
    input_size: usize,
    /// 4H x input_size, gate blocks ordered [input, forget, cell, output].
    w: Seg,
    /// 4H x H recurrent weights.
    u: Seg,
    /// 4H biases.
    b: Seg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub hyper: RnnHyper,
    pub quantiles: Option<QuantileSet>,
    lookback: usize,
    feature_count: usize,
    out_dim: usize,
    params: Vec<f64>,
    layer_segs: Vec<LayerSegs>,
    head_w: Seg,
    head_b: Seg,
    pub fitted: bool,
}

struct DropoutMasks {
    /// One mask per inter-layer boundary per timestep.
    inter: Vec<Vec<Vec<f64>>>,
    /// Mask on the final hidden state before the head.
    final_mask: Vec<f64>,
}

struct Forward {
    /// [layer][t] inputs as seen by the layer (dropout already applied).
    inputs: Vec<Vec<Vec<f64>>>,
    /// [layer][t] activated gates, 4H per step.
    gates: Vec<Vec<Vec<f64>>>,
    cells: Vec<Vec<Vec<f64>>>,
    tanh_cells: Vec<Vec<Vec<f64>>>,
    hiddens: Vec<Vec<Vec<f64>>>,
    final_dropped: Vec<f64>,
    outputs: Vec<f64>,
}

impl LstmModel {
    pub fn new(
        hyper: RnnHyper,
        quantiles: Option<QuantileSet>,
        lookback: usize,
        feature_count: usize,
        seed: u64,
    ) -> Result<Self, ModelError> {
        if hyper.hidden_size == 0 || hyper.layers == 0 {
            return Err(ModelError::InvalidHyperparameter(
                "hidden_size and layers must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&hyper.dropout) {
            return Err(ModelError::InvalidHyperparameter(
                "dropout must lie in [0, 1)".into(),
            ));
        }
        if lookback == 0 {
            return Err(ModelError::InvalidHyperparameter("lookback must be >= 1".into()));
        }
        let h = hyper.hidden_size;
        let input_size = feature_count + 1;
        let out_dim = quantiles.as_ref().map_or(1, QuantileSet::len);

        let mut cursor = 0;
        let mut seg = |len: usize| {
            let s = Seg { start: cursor, len };
            cursor += len;
            s
        };
        let mut layer_segs = Vec::with_capacity(hyper.layers);
        for l in 0..hyper.layers {
            let in_l = if l == 0 { input_size } else { h };
            layer_segs.push(LayerSegs {
                input_size: in_l,
                w: seg(4 * h * in_l),
                u: seg(4 * h * h),
                b: seg(4 * h),
            });
        }
        let head_w = seg(out_dim * h);
        let head_b = seg(out_dim);

        let mut params = vec![0.0; cursor];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for segs in &layer_segs {
            init_uniform(&mut rng, segs.input_size, segs.w.of_mut(&mut params));
            init_uniform(&mut rng, h, segs.u.of_mut(&mut params));
        }
        init_uniform(&mut rng, h, head_w.of_mut(&mut params));

        Ok(Self {
            hyper,
            quantiles,
            lookback,
            feature_count,
            out_dim,
            params,
            layer_segs,
            head_w,
            head_b,
            fitted: false,
        })
    }

    pub fn mode(&self) -> super::Mode {
        if self.quantiles.is_some() {
            super::Mode::Quantile
        } else {
            super::Mode::Point
        }
    }

    fn draw_masks(&self, seed: u64) -> Option<DropoutMasks> {
        let p = self.hyper.dropout;
        if p == 0.0 {
            return None;
        }
        let keep = 1.0 - p;
        let scale = 1.0 / keep;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = self.hyper.hidden_size;
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len)
                .map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 })
                .collect()
        };
        let inter = (1..self.hyper.layers)
            .map(|_| (0..self.lookback).map(|_| draw(h)).collect())
            .collect();
        let final_mask = draw(h);
        Some(DropoutMasks { inter, final_mask })
    }

    fn run_forward(&self, sample: &WindowSample<'_>, masks: Option<&DropoutMasks>) -> Forward {
        let h = self.hyper.hidden_size;
        let t_len = self.lookback;
        let k = self.feature_count;
        let layers = self.hyper.layers;

        let mut inputs = vec![Vec::with_capacity(t_len); layers];
        let mut gates = vec![Vec::with_capacity(t_len); layers];
        let mut cells = vec![Vec::with_capacity(t_len); layers];
        let mut tanh_cells = vec![Vec::with_capacity(t_len); layers];
        let mut hiddens = vec![Vec::with_capacity(t_len); layers];

        for l in 0..layers {
            let segs = &self.layer_segs[l];
            let w = segs.w.of(&self.params);
            let u = segs.u.of(&self.params);
            let b = segs.b.of(&self.params);
            for t in 0..t_len {
                let input = if l == 0 {
                    let mut v = Vec::with_capacity(k + 1);
                    v.push(sample.target_history[t]);
                    v.extend_from_slice(&sample.predictor_history[t * k..(t + 1) * k]);
                    v
                } else {
                    let below = &hiddens[l - 1][t];
                    match masks {
                        Some(m) => below
                            .iter()
                            .zip(&m.inter[l - 1][t])
                            .map(|(v, mk)| v * mk)
                            .collect(),
                        None => below.clone(),
                    }
                };
                let mut z = b.to_vec();
                matvec_add(w, &input, &mut z);
                if t > 0 {
                    matvec_add(u, &hiddens[l][t - 1], &mut z);
                }
                let mut gate = vec![0.0; 4 * h];
                for j in 0..h {
                    gate[j] = sigmoid(z[j]); // input gate
                    gate[h + j] = sigmoid(z[h + j]); // forget gate
                    gate[2 * h + j] = z[2 * h + j].tanh(); // cell candidate
                    gate[3 * h + j] = sigmoid(z[3 * h + j]); // output gate
                }
                let mut c = vec![0.0; h];
                let mut tc = vec![0.0; h];
                let mut hidden = vec![0.0; h];
                for j in 0..h {
                    let c_prev = if t > 0 { cells[l][t - 1][j] } else { 0.0 };
                    c[j] = gate[h + j] * c_prev + gate[j] * gate[2 * h + j];
                    tc[j] = c[j].tanh();
                    hidden[j] = gate[3 * h + j] * tc[j];
                }
                inputs[l].push(input);
                gates[l].push(gate);
                cells[l].push(c);
                tanh_cells[l].push(tc);
                hiddens[l].push(hidden);
            }
        }

        let last = &hiddens[layers - 1][t_len - 1];
        let final_dropped: Vec<f64> = match masks {
            Some(m) => last.iter().zip(&m.final_mask).map(|(v, mk)| v * mk).collect(),
            None => last.clone(),
        };
        let mut outputs = self.head_b.of(&self.params).to_vec();
        matvec_add(self.head_w.of(&self.params), &final_dropped, &mut outputs);

        Forward {
            inputs,
            gates,
            cells,
            tanh_cells,
            hiddens,
            final_dropped,
            outputs,
        }
    }

    fn backward(
        &self,
        fwd: &Forward,
        masks: Option<&DropoutMasks>,
        d_outputs: &[f64],
        grad: &mut [f64],
    ) {
        let h = self.hyper.hidden_size;
        let t_len = self.lookback;
        let layers = self.hyper.layers;

        outer_add(d_outputs, &fwd.final_dropped, self.head_w.of_mut(grad));
        for (g, d) in self.head_b.of_mut(grad).iter_mut().zip(d_outputs) {
            *g += d;
        }
        let mut dh_final = vec![0.0; h];
        matvec_t_add(self.head_w.of(&self.params), d_outputs, &mut dh_final);
        if let Some(m) = masks {
            for (d, mk) in dh_final.iter_mut().zip(&m.final_mask) {
                *d *= mk;
            }
        }

        // Gradient wrt each timestep's hidden state arriving from above (the
        // head for the top layer, the upper layer's input path otherwise).
        let mut d_above = vec![vec![0.0; h]; t_len];
        d_above[t_len - 1] = dh_final;

        for l in (0..layers).rev() {
            let segs = &self.layer_segs[l];
            let w = segs.w.of(&self.params);
            let u = segs.u.of(&self.params);
            let mut dh_carry = vec![0.0; h];
            let mut dc_carry = vec![0.0; h];
            let mut d_below = if l > 0 {
                vec![vec![0.0; segs.input_size]; t_len]
            } else {
                Vec::new()
            };

            for t in (0..t_len).rev() {
                let gate = &fwd.gates[l][t];
                let tc = &fwd.tanh_cells[l][t];
                let mut dz = vec![0.0; 4 * h];
                for j in 0..h {
                    let dh = d_above[t][j] + dh_carry[j];
                    let i_g = gate[j];
                    let f_g = gate[h + j];
                    let g_g = gate[2 * h + j];
                    let o_g = gate[3 * h + j];
                    let c_prev = if t > 0 { fwd.cells[l][t - 1][j] } else { 0.0 };

                    let d_o = dh * tc[j];
                    let dc = dc_carry[j] + dh * o_g * (1.0 - tc[j] * tc[j]);
                    let d_i = dc * g_g;
                    let d_g = dc * i_g;
                    let d_f = dc * c_prev;

                    dz[j] = d_i * i_g * (1.0 - i_g);
                    dz[h + j] = d_f * f_g * (1.0 - f_g);
                    dz[2 * h + j] = d_g * (1.0 - g_g * g_g);
                    dz[3 * h + j] = d_o * o_g * (1.0 - o_g);
                    dc_carry[j] = dc * f_g;
                }

                outer_add(&dz, &fwd.inputs[l][t], segs.w.of_mut(grad));
                if t > 0 {
                    outer_add(&dz, &fwd.hiddens[l][t - 1], segs.u.of_mut(grad));
                }
                for (g, d) in segs.b.of_mut(grad).iter_mut().zip(&dz) {
                    *g += d;
                }

                dh_carry.iter_mut().for_each(|v| *v = 0.0);
                matvec_t_add(u, &dz, &mut dh_carry);
                if l > 0 {
                    matvec_t_add(w, &dz, &mut d_below[t]);
                }
            }

            if l > 0 {
                // Route input gradients through the inter-layer dropout mask
                // down to the hidden states of the layer below.
                for t in 0..t_len {
                    match masks {
                        Some(m) => {
                            for j in 0..h {
                                d_above[t][j] = d_below[t][j] * m.inter[l - 1][t][j];
                            }
                        }
                        None => d_above[t].copy_from_slice(&d_below[t]),
                    }
                }
            }
        }
    }
}

impl Differentiable for LstmModel {
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
        self.out_dim
    }

    fn lookback(&self) -> usize {
        self.lookback
    }

    fn feature_count(&self) -> usize {
        self.feature_count
    }

    fn forward(&self, sample: &WindowSample<'_>) -> Vec<f64> {
        self.run_forward(sample, None).outputs
    }

    fn forward_backward(
        &self,
        sample: &WindowSample<'_>,
        dropout_seed: Option<u64>,
        d_out: &mut dyn FnMut(&[f64]) -> Vec<f64>,
        grad: &mut [f64],
    ) -> Vec<f64> {
        let masks = dropout_seed.and_then(|s| self.draw_masks(s));
        let fwd = self.run_forward(sample, masks.as_ref());
        let d_outputs = d_out(&fwd.outputs);
        self.backward(&fwd, masks.as_ref(), &d_outputs, grad);
        fwd.outputs
    }

    fn mark_fitted(&mut self) {
        self.fitted = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_data(w: usize, k: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let th: Vec<f64> = (0..w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ph: Vec<f64> = (0..w * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (th, ph)
    }

    #[test]
    fn zero_weights_output_head_bias() {
        let hyper = RnnHyper {
            hidden_size: 8,
            layers: 2,
            dropout: 0.0,
        };
        let mut model = LstmModel::new(hyper, None, 6, 3, 1).unwrap();
        let n = model.param_count();
        model.params_mut().iter_mut().for_each(|p| *p = 0.0);
        model.params_mut()[n - 1] = 2.5; // head bias (out_dim = 1, last slot)
        let (th, ph) = sample_data(6, 3, 9);
        let out = model.forward(&WindowSample {
            target_history: &th,
            predictor_history: &ph,
            label: 0.0,
        });
        assert_eq!(out, vec![2.5]);
    }

    #[test]
    fn output_dim_matches_quantile_head() {
        let q = QuantileSet::default();
        let model = LstmModel::new(RnnHyper::default(), Some(q), 24, 13, 0).unwrap();
        assert_eq!(model.output_dim(), 3);
        let point = LstmModel::new(RnnHyper::default(), None, 24, 13, 0).unwrap();
        assert_eq!(point.output_dim(), 1);
    }

    #[test]
    fn forward_is_deterministic_per_seed() {
        let hyper = RnnHyper {
            hidden_size: 16,
            layers: 1,
            dropout: 0.0,
        };
        let a = LstmModel::new(hyper.clone(), None, 8, 4, 77).unwrap();
        let b = LstmModel::new(hyper, None, 8, 4, 77).unwrap();
        assert_eq!(a.params(), b.params());
        let (th, ph) = sample_data(8, 4, 3);
        let s = WindowSample {
            target_history: &th,
            predictor_history: &ph,
            label: 0.0,
        };
        assert_eq!(a.forward(&s), b.forward(&s));
    }

    #[test]
    fn dropout_masks_are_seed_stable() {
        let hyper = RnnHyper {
            hidden_size: 8,
            layers: 2,
            dropout: 0.4,
        };
        let model = LstmModel::new(hyper, None, 4, 2, 5).unwrap();
        let (th, ph) = sample_data(4, 2, 1);
        let s = WindowSample {
            target_history: &th,
            predictor_history: &ph,
            label: 1.0,
        };
        let mut g1 = vec![0.0; model.param_count()];
        let mut g2 = vec![0.0; model.param_count()];
        let o1 = model.forward_backward(&s, Some(99), &mut |o| vec![o[0] - 1.0], &mut g1);
        let o2 = model.forward_backward(&s, Some(99), &mut |o| vec![o[0] - 1.0], &mut g2);
        assert_eq!(o1, o2);
        assert_eq!(g1, g2);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(LstmModel::new(
            RnnHyper {
                hidden_size: 0,
                layers: 1,
                dropout: 0.0
            },
            None,
            24,
            13,
            0
        )
        .is_err());
        assert!(LstmModel::new(
            RnnHyper {
                hidden_size: 4,
                layers: 1,
                dropout: 1.0
            },
            None,
            24,
            13,
            0
        )
        .is_err());
    }
}
