//! Encoder → LSTM → heads, evaluated frame by frame.
//!
//! Per frame `t` with masks `m_in`, `m_rec`, `m_hid`:
//!
//! ```text
//! a_0 = x_t ⊙ m_in,  a_l = tanh(W_l a_{l-1} + b_l)
//! z   = W_x (a_L ⊙ m_rec) + W_h (h_{t-1} ⊙ m_hid) + b      gates [i, f, g, o]
//! c_t = σ(f) c_{t-1} + σ(i) tanh(g),  h_t = σ(o) tanh(c_t)
//! reg = W_r h_t + b_r,  logits = W_c h_t + b_c,  phase = W_p h_t + b_p
//! ```
//!
//! Nothing normalises across frames, so output `t` depends on frames `0..=t` only.

use super::config::{NetworkConfig, RegressionOutput};
use super::masks::DropoutMasks;
use super::params::{Dense, NetworkParams};
use crate::error::{Error, Result};
use crate::workflow::FeatureMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            hidden: vec![0.0; hidden],
            cell: vec![0.0; hidden],
        }
    }
}

/// Per-frame network outputs before softmax/clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct RawOutputs {
    pub instruments: usize,
    /// `len × K` regression outputs in minutes.
    pub regression: Vec<f64>,
    /// `len × K × 3` class logits, instrument-major within a frame.
    pub class_logits: Vec<f64>,
    /// `len × P` phase logits when the phase head is enabled.
    pub phase_logits: Option<Vec<f64>>,
    pub phases: usize,
}

impl RawOutputs {
    pub fn len(&self) -> usize {
        self.regression.len() / self.instruments
    }

    pub fn is_empty(&self) -> bool {
        self.regression.is_empty()
    }

    pub fn regression(&self, t: usize, k: usize) -> f64 {
        self.regression[t * self.instruments + k]
    }

    pub fn logits(&self, t: usize, k: usize) -> &[f64] {
        let o = (t * self.instruments + k) * 3;
        &self.class_logits[o..o + 3]
    }

    pub fn phase(&self, t: usize) -> Option<&[f64]> {
        self.phase_logits
            .as_ref()
            .map(|p| &p[t * self.phases..(t + 1) * self.phases])
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out = W x + b` for a dense block inside the flat parameter vector.
fn affine(theta: &[f64], d: &Dense, x: &[f64], out: &mut [f64]) {
    let w = &theta[d.w..d.w + d.rows * d.cols];
    let b = &theta[d.b..d.b + d.rows];
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * d.cols..(r + 1) * d.cols];
        *o = b[r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn matvec_add(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += Wᵀ dy`
fn matvec_t_add(w: &[f64], cols: usize, dy: &[f64], out: &mut [f64]) {
    for (r, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += g * a;
        }
    }
}

/// `dW += dy ⊗ x`
fn outer_add(dw: &mut [f64], cols: usize, dy: &[f64], x: &[f64]) {
    for (r, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &mut dw[r * cols..(r + 1) * cols];
        for (o, a) in row.iter_mut().zip(x) {
            *o += g * a;
        }
    }
}

/// Activations of one frame kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    /// `a_0..=a_L`
    enc: Vec<Vec<f64>>,
    u: Vec<f64>,
    h_masked: Vec<f64>,
    /// Post-activation gates `[i, f, g, o]`.
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
    /// Regression outputs after the output transform.
    reg: Vec<f64>,
}

fn check_dims(params: &NetworkParams, masks: &DropoutMasks, features: &FeatureMatrix, state: &RecurrentState) -> Result<()> {
    let cfg = params.config();
    if features.dim() != cfg.input_dim {
        return Err(Error::Dimension(format!(
            "features have dim {}, network expects {}",
            features.dim(),
            cfg.input_dim
        )));
    }
    if !masks.matches(cfg) {
        return Err(Error::Dimension("dropout masks do not match the network config".into()));
    }
    if state.hidden.len() != cfg.hidden || state.cell.len() != cfg.hidden {
        return Err(Error::Dimension("recurrent state width does not match the network".into()));
    }
    Ok(())
}

fn run(
    params: &NetworkParams,
    masks: &DropoutMasks,
    features: &FeatureMatrix,
    initial: &RecurrentState,
    mut cache: Option<&mut Vec<StepCache>>,
) -> Result<(RawOutputs, RecurrentState)> {
    check_dims(params, masks, features, initial)?;
    let cfg: &NetworkConfig = params.config();
    let theta = params.values();
    let lay = &params.layout;
    let n = features.rows();
    let hid = cfg.hidden;
    let k = cfg.instruments;
    let p = cfg.phases.unwrap_or(0);

    let mut out = RawOutputs {
        instruments: k,
        regression: Vec::with_capacity(n * k),
        class_logits: Vec::with_capacity(n * k * 3),
        phase_logits: lay.phase.map(|_| Vec::with_capacity(n * p)),
        phases: p,
    };
    let mut h = initial.hidden.clone();
    let mut c = initial.cell.clone();
    let mut z = vec![0.0; 4 * hid];
    let mut reg = vec![0.0; k];
    let mut logits = vec![0.0; 3 * k];
    let mut phase = vec![0.0; p];
    let wh = &theta[lay.lstm_hidden_w..lay.lstm_hidden_w + 4 * hid * hid];

    for t in 0..n {
        let x = features.row(t);
        let mut enc = Vec::with_capacity(lay.encoder.len() + 1);
        enc.push(x.iter().zip(&masks.input).map(|(a, m)| a * m).collect::<Vec<f64>>());
        for d in &lay.encoder {
            let mut a = vec![0.0; d.rows];
            affine(theta, d, enc.last().unwrap(), &mut a);
            a.iter_mut().for_each(|v| *v = v.tanh());
            enc.push(a);
        }
        let u: Vec<f64> = enc
            .last()
            .unwrap()
            .iter()
            .zip(&masks.recurrent_input)
            .map(|(a, m)| a * m)
            .collect();
        let h_masked: Vec<f64> = h.iter().zip(&masks.hidden).map(|(a, m)| a * m).collect();
        affine(theta, &lay.lstm_input, &u, &mut z);
        matvec_add(wh, hid, &h_masked, &mut z);
        let mut gates = z.clone();
        for (j, g) in gates.iter_mut().enumerate() {
            *g = if (2 * hid..3 * hid).contains(&j) { g.tanh() } else { sigmoid(*g) };
        }
        let c_prev = c.clone();
        let mut tanh_c = vec![0.0; hid];
        for j in 0..hid {
            c[j] = gates[hid + j] * c_prev[j] + gates[j] * gates[2 * hid + j];
            tanh_c[j] = c[j].tanh();
            h[j] = gates[3 * hid + j] * tanh_c[j];
        }

        affine(theta, &lay.reg, &h, &mut reg);
        if cfg.output == RegressionOutput::ScaledSigmoid {
            reg.iter_mut().for_each(|v| *v = cfg.horizon * sigmoid(*v));
        }
        affine(theta, &lay.cls, &h, &mut logits);
        out.regression.extend_from_slice(&reg);
        out.class_logits.extend_from_slice(&logits);
        if let (Some(d), Some(pl)) = (&lay.phase, out.phase_logits.as_mut()) {
            affine(theta, d, &h, &mut phase);
            pl.extend_from_slice(&phase);
        }
        if let Some(cache) = cache.as_deref_mut() {
            cache.push(StepCache {
                enc,
                u,
                h_masked,
                gates,
                c_prev,
                tanh_c,
                h: h.clone(),
                reg: reg.clone(),
            });
        }
    }
    Ok((out, RecurrentState { hidden: h, cell: c }))
}

/// Runs the network over `features` starting from `initial`.
pub fn forward(
    params: &NetworkParams,
    masks: &DropoutMasks,
    features: &FeatureMatrix,
    initial: &RecurrentState,
) -> Result<(RawOutputs, RecurrentState)> {
    run(params, masks, features, initial, None)
}

pub(crate) fn forward_cached(
    params: &NetworkParams,
    masks: &DropoutMasks,
    features: &FeatureMatrix,
    initial: &RecurrentState,
) -> Result<(RawOutputs, RecurrentState, Vec<StepCache>)> {
    let mut cache = Vec::with_capacity(features.rows());
    let (out, state) = run(params, masks, features, initial, Some(&mut cache))?;
    Ok((out, state, cache))
}

/// Gradients of the loss w.r.t. the raw outputs.
#[derive(Debug, Clone)]
pub(crate) struct OutputGrads {
    pub regression: Vec<f64>,
    pub class_logits: Vec<f64>,
    pub phase_logits: Option<Vec<f64>>,
}

/// Backpropagation through time over the cached window. The initial state is
/// treated as a constant. Accumulates into `grad` (same layout as params).
pub(crate) fn backprop(
    params: &NetworkParams,
    masks: &DropoutMasks,
    cache: &[StepCache],
    dout: &OutputGrads,
    grad: &mut [f64],
) {
    let cfg = params.config();
    let theta = params.values();
    let lay = &params.layout;
    let hid = cfg.hidden;
    let k = cfg.instruments;
    let p = cfg.phases.unwrap_or(0);
    let wh_off = lay.lstm_hidden_w;
    let wx = lay.lstm_input;

    let mut dh_next = vec![0.0; hid];
    let mut dc_next = vec![0.0; hid];
    let mut dreg = vec![0.0; k];
    let mut dz = vec![0.0; 4 * hid];

    for (t, step) in cache.iter().enumerate().rev() {
        // heads
        let mut dh = dh_next.clone();
        for j in 0..k {
            let g = dout.regression[t * k + j];
            dreg[j] = match cfg.output {
                RegressionOutput::LinearClamped => g,
                RegressionOutput::ScaledSigmoid => {
                    let f = step.reg[j];
                    g * f * (1.0 - f / cfg.horizon)
                }
            };
        }
        let heads = [
            (lay.reg, &dreg[..]),
            (lay.cls, &dout.class_logits[t * 3 * k..(t + 1) * 3 * k]),
        ];
        for (d, dy) in heads {
            outer_add(&mut grad[d.w..d.w + d.rows * d.cols], d.cols, dy, &step.h);
            grad[d.b..d.b + d.rows].iter_mut().zip(dy).for_each(|(g, v)| *g += v);
            matvec_t_add(&theta[d.w..d.w + d.rows * d.cols], d.cols, dy, &mut dh);
        }
        if let (Some(d), Some(dp)) = (lay.phase, dout.phase_logits.as_ref()) {
            let dy = &dp[t * p..(t + 1) * p];
            outer_add(&mut grad[d.w..d.w + d.rows * d.cols], d.cols, dy, &step.h);
            grad[d.b..d.b + d.rows].iter_mut().zip(dy).for_each(|(g, v)| *g += v);
            matvec_t_add(&theta[d.w..d.w + d.rows * d.cols], d.cols, dy, &mut dh);
        }

        // cell
        let g = &step.gates;
        for j in 0..hid {
            let (i, f, cand, o) = (g[j], g[hid + j], g[2 * hid + j], g[3 * hid + j]);
            let tc = step.tanh_c[j];
            let d_o = dh[j] * tc;
            let dc = dh[j] * o * (1.0 - tc * tc) + dc_next[j];
            let d_i = dc * cand;
            let d_g = dc * i;
            let d_f = dc * step.c_prev[j];
            dc_next[j] = dc * f;
            dz[j] = d_i * i * (1.0 - i);
            dz[hid + j] = d_f * f * (1.0 - f);
            dz[2 * hid + j] = d_g * (1.0 - cand * cand);
            dz[3 * hid + j] = d_o * o * (1.0 - o);
        }
        outer_add(&mut grad[wx.w..wx.w + wx.rows * wx.cols], wx.cols, &dz, &step.u);
        grad[wx.b..wx.b + wx.rows].iter_mut().zip(&dz).for_each(|(g, v)| *g += v);
        outer_add(&mut grad[wh_off..wh_off + 4 * hid * hid], hid, &dz, &step.h_masked);

        let mut dh_masked = vec![0.0; hid];
        matvec_t_add(&theta[wh_off..wh_off + 4 * hid * hid], hid, &dz, &mut dh_masked);
        dh_next = dh_masked
            .iter()
            .zip(&masks.hidden)
            .map(|(a, m)| a * m)
            .collect();

        // encoder
        if lay.encoder.is_empty() {
            continue;
        }
        let mut du = vec![0.0; wx.cols];
        matvec_t_add(&theta[wx.w..wx.w + wx.rows * wx.cols], wx.cols, &dz, &mut du);
        let mut da: Vec<f64> = du
            .iter()
            .zip(&masks.recurrent_input)
            .map(|(a, m)| a * m)
            .collect();
        for (l, d) in lay.encoder.iter().enumerate().rev() {
            let a = &step.enc[l + 1];
            let dpre: Vec<f64> = da.iter().zip(a).map(|(g, v)| g * (1.0 - v * v)).collect();
            outer_add(&mut grad[d.w..d.w + d.rows * d.cols], d.cols, &dpre, &step.enc[l]);
            grad[d.b..d.b + d.rows].iter_mut().zip(&dpre).for_each(|(g, v)| *g += v);
            if l > 0 {
                let mut prev = vec![0.0; d.cols];
                matvec_t_add(&theta[d.w..d.w + d.rows * d.cols], d.cols, &dpre, &mut prev);
                da = prev;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, sample_masks};

    fn tiny() -> NetworkConfig {
        let mut c = NetworkConfig::new(3, 2, 3.0);
        c.encoder_widths = vec![4];
        c.hidden = 5;
        c.phases = Some(2);
        c
    }

    fn feats(n: usize, dim: usize) -> FeatureMatrix {
        FeatureMatrix::new(dim, (0..n * dim).map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0).collect()).unwrap()
    }

    #[test]
    fn all_zero_net_outputs_head_bias() {
        let mut c = NetworkConfig::new(1, 1, 3.0);
        c.encoder_widths = vec![];
        c.hidden = 1;
        let mut p = NetworkParams::zeros(&c).unwrap();
        p.tensor_mut("head.regression.bias").unwrap()[0] = 0.7;
        let f = feats(20, 1);
        let (out, state) = forward(&p, &DropoutMasks::identity(&c), &f, &RecurrentState::zeros(1)).unwrap();
        // all gates: i = f = o = σ(0) = 1/2, g = tanh(0) = 0, so c and h stay 0
        assert_eq!(state, RecurrentState::zeros(1));
        assert!(out.regression.iter().all(|&v| v == 0.7));
        assert!(out.class_logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prefix_invariance() {
        let c = tiny();
        let p = init_params(&c, 1).unwrap();
        let m = sample_masks(&c, 2).unwrap();
        let f = feats(40, 3);
        let s0 = RecurrentState::zeros(5);
        let (full, _) = forward(&p, &m, &f, &s0).unwrap();
        let (pre, _) = forward(&p, &m, &f.slice_rows(0, 17), &s0).unwrap();
        for t in 0..17 {
            for j in 0..2 {
                assert!((full.regression(t, j) - pre.regression(t, j)).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn state_carry_equals_single_pass() {
        let c = tiny();
        let p = init_params(&c, 4).unwrap();
        let m = sample_masks(&c, 5).unwrap();
        let f = feats(30, 3);
        let s0 = RecurrentState::zeros(5);
        let (full, end) = forward(&p, &m, &f, &s0).unwrap();
        let (a, mid) = forward(&p, &m, &f.slice_rows(0, 12), &s0).unwrap();
        let (b, end2) = forward(&p, &m, &f.slice_rows(12, 30), &mid).unwrap();
        assert_eq!(end, end2);
        let joined: Vec<f64> = a.regression.iter().chain(&b.regression).copied().collect();
        assert_eq!(joined, full.regression);
    }

    #[test]
    fn zero_rate_masks_equal_unmasked() {
        let mut c = tiny();
        c.dropout = 0.0;
        let p = init_params(&c, 1).unwrap();
        let f = feats(10, 3);
        let s0 = RecurrentState::zeros(5);
        let a = forward(&p, &sample_masks(&c, 9).unwrap(), &f, &s0).unwrap();
        let b = forward(&p, &DropoutMasks::identity(&c), &f, &s0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scaled_sigmoid_in_range() {
        let mut c = tiny();
        c.output = RegressionOutput::ScaledSigmoid;
        let p = init_params(&c, 1).unwrap();
        let (out, _) = forward(&p, &DropoutMasks::identity(&c), &feats(10, 3), &RecurrentState::zeros(5)).unwrap();
        assert!(out.regression.iter().all(|&v| v > 0.0 && v < 3.0));
    }

    #[test]
    fn dimension_mismatch() {
        let c = tiny();
        let p = init_params(&c, 1).unwrap();
        let r = forward(&p, &DropoutMasks::identity(&c), &feats(3, 4), &RecurrentState::zeros(5));
        assert!(matches!(r, Err(Error::Dimension(_))));
    }
}
