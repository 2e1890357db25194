//! Training objective: per frame, the sum over instruments of the SmoothL1
//! regression error plus `λ` times the three-class cross entropy, averaged
//! over frames, plus `γ‖θ‖²` and optionally `λ_phase` times the phase cross
//! entropy.

use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::masks::DropoutMasks;
use super::network::{backprop, forward_cached, OutputGrads, RawOutputs, RecurrentState};
use super::params::NetworkParams;
use crate::error::{Error, Result};
use crate::labels::AnticipationTargets;
use crate::workflow::FeatureMatrix;

/// Weighted loss contributions; `total` is their sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub regression: f64,
    pub classification: f64,
    pub phase: f64,
    pub l2: f64,
    pub total: f64,
}

impl LossTerms {
    pub fn sum_terms(&self) -> f64 {
        self.regression + self.classification + self.phase + self.l2
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// SmoothL1 with unit transition: `0.5 d²` for `|d| < 1`, else `|d| − 0.5`.
pub fn smooth_l1(d: f64) -> f64 {
    let a = d.abs();
    if a < 1.0 {
        0.5 * d * d
    } else {
        a - 0.5
    }
}

fn smooth_l1_grad(d: f64) -> f64 {
    if d.abs() < 1.0 {
        d
    } else {
        d.signum()
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `−log softmax(logits)[target]` and its gradient w.r.t. the logits.
fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let mut grad = softmax(logits);
    grad[target] -= 1.0;
    (lse - logits[target], grad)
}

fn check_aligned(outputs: &RawOutputs, targets: &AnticipationTargets, phases: Option<&[usize]>) -> Result<()> {
    if outputs.len() != targets.len() || outputs.instruments != targets.num_instruments() {
        return Err(Error::Dimension(format!(
            "outputs {}x{} vs targets {}x{}",
            outputs.len(),
            outputs.instruments,
            targets.len(),
            targets.num_instruments()
        )));
    }
    if outputs.is_empty() {
        return Err(Error::Empty("loss over zero frames".into()));
    }
    if let (Some(ph), Some(_)) = (phases, &outputs.phase_logits) {
        if ph.len() != outputs.len() {
            return Err(Error::Dimension(format!(
                "{} phase labels for {} frames",
                ph.len(),
                outputs.len()
            )));
        }
        if let Some(bad) = ph.iter().find(|&&p| p >= outputs.phases) {
            return Err(Error::InvalidArgument(format!("phase label {bad} out of range")));
        }
    }
    Ok(())
}

pub(crate) fn loss_and_output_grads(
    outputs: &RawOutputs,
    targets: &AnticipationTargets,
    phases: Option<&[usize]>,
    config: &NetworkConfig,
    params: &NetworkParams,
) -> Result<(LossTerms, OutputGrads)> {
    check_aligned(outputs, targets, phases)?;
    let n = outputs.len();
    let k = outputs.instruments;
    let inv_n = 1.0 / n as f64;
    let mut terms = LossTerms::default();
    let mut grads = OutputGrads {
        regression: vec![0.0; n * k],
        class_logits: vec![0.0; n * k * 3],
        phase_logits: None,
    };
    for t in 0..n {
        for j in 0..k {
            let d = outputs.regression(t, j) - targets.remaining(t, j);
            terms.regression += smooth_l1(d) * inv_n;
            grads.regression[t * k + j] = smooth_l1_grad(d) * inv_n;

            let (ce, g) = cross_entropy(outputs.logits(t, j), targets.class(t, j).index());
            terms.classification += config.lambda * ce * inv_n;
            let o = (t * k + j) * 3;
            for c in 0..3 {
                grads.class_logits[o + c] = config.lambda * g[c] * inv_n;
            }
        }
    }
    if let (Some(ph), Some(_)) = (phases, &outputs.phase_logits) {
        let w = config.phase_weight();
        let p = outputs.phases;
        let mut dp = vec![0.0; n * p];
        for (t, &label) in ph.iter().enumerate() {
            let (ce, g) = cross_entropy(outputs.phase(t).unwrap(), label);
            terms.phase += w * ce * inv_n;
            for c in 0..p {
                dp[t * p + c] = w * g[c] * inv_n;
            }
        }
        grads.phase_logits = Some(dp);
    }
    terms.l2 = config.gamma * params.squared_norm();
    terms.total = terms.sum_terms();
    Ok((terms, grads))
}

/// Loss of already computed outputs. `phases` is used only when the network
/// has a phase head.
pub fn compute_loss(
    outputs: &RawOutputs,
    targets: &AnticipationTargets,
    phases: Option<&[usize]>,
    params: &NetworkParams,
) -> Result<LossTerms> {
    loss_and_output_grads(outputs, targets, phases, params.config(), params).map(|(t, _)| t)
}

/// Gradient of the loss w.r.t. every parameter, in registry order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len] }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        self.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += b);
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }
}

/// Loss and gradient over one window of frames, starting from `initial`
/// (treated as a constant). Also returns the window's final state.
pub fn backward(
    params: &NetworkParams,
    masks: &DropoutMasks,
    features: &FeatureMatrix,
    targets: &AnticipationTargets,
    phases: Option<&[usize]>,
    initial: &RecurrentState,
) -> Result<(LossTerms, Gradients, RecurrentState)> {
    let (outputs, state, cache) = forward_cached(params, masks, features, initial)?;
    let (terms, dout) = loss_and_output_grads(&outputs, targets, phases, params.config(), params)?;
    let mut grad = Gradients::zeros(params.len());
    backprop(params, masks, &cache, &dout, &mut grad.values);
    let two_gamma = 2.0 * params.config().gamma;
    for (g, w) in grad.values.iter_mut().zip(params.values()) {
        *g += two_gamma * w;
    }
    if let Some(i) = grad.values.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite gradient for parameter `{}` (index {i})",
            params.param_name(i)
        )));
    }
    Ok((terms, grad, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::compute_targets;
    use crate::model::{forward, init_params, sample_masks};
    use crate::workflow::ProcedureSequence;

    fn cfg(lambda: f64, gamma: f64) -> NetworkConfig {
        let mut c = NetworkConfig::new(2, 1, 3.0);
        c.encoder_widths = vec![3];
        c.hidden = 2;
        c.lambda = lambda;
        c.gamma = gamma;
        c
    }

    fn targets(presence: Vec<bool>) -> AnticipationTargets {
        let s = ProcedureSequence::new("t", 1.0, vec!["x".into()], presence).unwrap();
        compute_targets(&s, 3.0).unwrap()
    }

    #[test]
    fn smooth_l1_closed_form() {
        assert_eq!(smooth_l1(0.5), 0.125);
        assert_eq!(smooth_l1(-2.0), 1.5);
        assert_eq!(smooth_l1(1.0), 0.5);
    }

    #[test]
    fn single_frame_regression_term() {
        let c = cfg(0.0, 0.0);
        let p = NetworkParams::zeros(&c).unwrap();
        let t = targets(vec![false]); // r = 3
        let out = RawOutputs {
            instruments: 1,
            regression: vec![3.5],
            class_logits: vec![0.0; 3],
            phase_logits: None,
            phases: 0,
        };
        let l = compute_loss(&out, &t, None, &p).unwrap();
        assert_eq!(l.regression, 0.125);
        assert_eq!(l.total, 0.125);
    }

    #[test]
    fn perfect_fit_leaves_l2_only() {
        let c = cfg(1e-2, 1e-5);
        let p = init_params(&c, 3).unwrap();
        let t = targets(vec![false, false, true, false]);
        let mut logits = Vec::new();
        for f in 0..t.len() {
            let mut l = [0.0; 3];
            l[t.class(f, 0).index()] = 60.0;
            logits.extend(l);
        }
        let out = RawOutputs {
            instruments: 1,
            regression: t.remaining_track(0),
            class_logits: logits,
            phase_logits: None,
            phases: 0,
        };
        let l = compute_loss(&out, &t, None, &p).unwrap();
        assert!((l.total - 1e-5 * p.squared_norm()).abs() < 1e-6);
        assert_eq!(l.total, l.sum_terms());
    }

    #[test]
    fn gamma_only_gradient_is_two_gamma_theta() {
        // with λ = 0 and a zero-weight regression head the data term has zero
        // gradient w.r.t. all weights feeding it
        let mut c = cfg(0.0, 0.3);
        c.dropout = 0.0;
        let mut p = init_params(&c, 1).unwrap();
        p.tensor_mut("head.regression.weight").unwrap().iter_mut().for_each(|v| *v = 0.0);
        p.tensor_mut("head.regression.bias").unwrap()[0] = 3.0;
        let t = targets(vec![false; 5]);
        let f = FeatureMatrix::new(2, vec![0.3; 10]).unwrap();
        let (_, g, _) = backward(&p, &DropoutMasks::identity(&c), &f, &t, None, &RecurrentState::zeros(2)).unwrap();
        for (gi, w) in g.values.iter().zip(p.values()) {
            assert_eq!(*gi, 2.0 * 0.3 * w);
        }
    }

    #[test]
    fn perfect_fit_zero_regression_head_gradient() {
        let mut c = cfg(0.0, 0.0);
        c.dropout = 0.0;
        let mut p = init_params(&c, 1).unwrap();
        p.tensor_mut("head.regression.weight").unwrap().iter_mut().for_each(|v| *v = 0.0);
        p.tensor_mut("head.regression.bias").unwrap()[0] = 3.0;
        let t = targets(vec![false; 5]);
        let f = FeatureMatrix::new(2, vec![0.1; 10]).unwrap();
        let (l, g, _) = backward(&p, &DropoutMasks::identity(&c), &f, &t, None, &RecurrentState::zeros(2)).unwrap();
        assert_eq!(l.total, 0.0);
        let reg = p.tensors().iter().find(|e| e.name == "head.regression.weight").unwrap();
        assert!(g.values[reg.range()].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn length_mismatch_rejected() {
        let c = cfg(1e-2, 0.0);
        let p = init_params(&c, 1).unwrap();
        let m = sample_masks(&c, 1).unwrap();
        let f = FeatureMatrix::new(2, vec![0.0; 8]).unwrap();
        let (out, _) = forward(&p, &m, &f, &RecurrentState::zeros(2)).unwrap();
        assert!(compute_loss(&out, &targets(vec![false; 3]), None, &p).is_err());
    }
}
