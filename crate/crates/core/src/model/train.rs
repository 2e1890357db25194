//! Training loop.
//!
//! Each epoch visits the videos in a seeded random order. Per video one mask
//! set is drawn, then the video is cut into windows of `window` frames. The
//! recurrent state is carried across windows while gradients stop at window
//! boundaries. Gradients of `accumulation` consecutive windows are averaged
//! into one Adam step; a trailing partial group at the end of a video is
//! stepped as well.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::loss::{backward, Gradients, LossTerms};
use super::masks::sample_masks;
use super::network::RecurrentState;
use super::params::{init_params, NetworkParams};
use crate::error::{Error, Result};
use crate::labels::AnticipationTargets;
use crate::par::derive_seed;
use crate::workflow::{FeatureMatrix, ProcedureSequence};

const STREAM_INIT: u64 = 0x1417;
const STREAM_ORDER: u64 = 0x0d3;
const STREAM_MASK: u64 = 0x3a5c;

#[derive(Debug, Clone, Copy)]
pub struct TrainingVideo<'a> {
    pub features: &'a FeatureMatrix,
    pub targets: &'a AnticipationTargets,
    pub phases: Option<&'a [usize]>,
}

impl<'a> TrainingVideo<'a> {
    pub fn new(seq: &'a ProcedureSequence, targets: &'a AnticipationTargets) -> Result<Self> {
        let features = seq
            .features()
            .ok_or_else(|| Error::InvalidArgument(format!("sequence {} has no features", seq.id())))?;
        if targets.len() != seq.len() {
            return Err(Error::Dimension(format!(
                "sequence {} has {} frames but {} targets",
                seq.id(),
                seq.len(),
                targets.len()
            )));
        }
        Ok(Self {
            features,
            targets,
            phases: seq.phases(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Window-averaged loss terms.
    pub loss: LossTerms,
    pub windows: usize,
    pub updates: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,regression,classification,phase,l2,total,windows,updates\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{:.9},{:.9},{:.9},{:.9},{:.9},{},{}\n",
                e.epoch, e.loss.regression, e.loss.classification, e.loss.phase, e.loss.l2, e.loss.total, e.windows, e.updates
            ));
        }
        out
    }
}

/// Trains from a fresh initialisation seeded by `config.seed`.
pub fn train(videos: &[TrainingVideo<'_>], config: &NetworkConfig) -> Result<(NetworkParams, TrainingLog)> {
    let params = init_params(config, derive_seed(config.seed, STREAM_INIT, 0))?;
    train_from(params, videos, config)
}

/// Continues training `params` for `config.epochs` epochs.
pub fn train_from(
    mut params: NetworkParams,
    videos: &[TrainingVideo<'_>],
    config: &NetworkConfig,
) -> Result<(NetworkParams, TrainingLog)> {
    config.validate()?;
    if videos.is_empty() {
        return Err(Error::Empty("training set is empty".into()));
    }
    for (i, v) in videos.iter().enumerate() {
        if v.features.dim() != config.input_dim {
            return Err(Error::Dimension(format!(
                "video {i}: feature dim {} != {}",
                v.features.dim(),
                config.input_dim
            )));
        }
        if v.targets.num_instruments() != config.instruments || v.targets.len() != v.features.rows() {
            return Err(Error::Dimension(format!("video {i}: targets do not match features/config")));
        }
        if config.phases.is_some() && v.phases.is_none() {
            return Err(Error::InvalidArgument(format!("video {i}: phase head enabled but no phase labels")));
        }
    }
    let mut adam = Adam::new(params.len(), config.learning_rate);
    let mut log = TrainingLog::default();
    let mut order: Vec<usize> = (0..videos.len()).collect();

    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_ORDER, epoch as u64));
        order.shuffle(&mut rng);
        let mut sum = LossTerms::default();
        let mut windows = 0usize;
        let updates_before = adam.steps();

        for &vi in &order {
            let video = &videos[vi];
            let masks = sample_masks(
                config,
                derive_seed(config.seed, STREAM_MASK, (epoch * videos.len() + vi) as u64),
            )?;
            let n = video.features.rows();
            let mut state = RecurrentState::zeros(config.hidden);
            let mut acc = Gradients::zeros(params.len());
            let mut pending = 0usize;
            let mut start = 0;
            while start < n {
                let end = (start + config.window).min(n);
                let feats = video.features.slice_rows(start, end);
                let targets = video.targets.slice(start, end);
                let phases = video.phases.map(|p| &p[start..end]);
                let (terms, grad, next) = backward(&params, &masks, &feats, &targets, phases, &state)
                    .map_err(|e| match e {
                        Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, video {vi}: {m}")),
                        other => other,
                    })?;
                if !terms.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite loss at epoch {epoch}, video {vi}, frames {start}..{end}"
                    )));
                }
                sum.regression += terms.regression;
                sum.classification += terms.classification;
                sum.phase += terms.phase;
                sum.l2 += terms.l2;
                sum.total += terms.total;
                windows += 1;
                acc.add_assign(&grad);
                pending += 1;
                state = next;
                start = end;
                if pending == config.accumulation || start >= n {
                    acc.scale(1.0 / pending as f64);
                    adam.update(params.values_mut(), &acc.values);
                    acc = Gradients::zeros(params.len());
                    pending = 0;
                }
            }
        }

        let w = windows.max(1) as f64;
        let mean = LossTerms {
            regression: sum.regression / w,
            classification: sum.classification / w,
            phase: sum.phase / w,
            l2: sum.l2 / w,
            total: sum.total / w,
        };
        log.epochs.push(EpochLog {
            epoch,
            loss: mean,
            windows,
            updates: (adam.steps() - updates_before) as usize,
        });
    }
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::compute_targets;

    fn video() -> (ProcedureSequence, AnticipationTargets) {
        let mut presence = vec![false; 300];
        presence[200..220].iter_mut().for_each(|p| *p = true);
        let feats: Vec<f64> = (0..300).flat_map(|t| [if (140..160).contains(&t) { 1.0 } else { 0.0 }, 0.5]).collect();
        let s = ProcedureSequence::new("v", 1.0, vec!["x".into()], presence)
            .unwrap()
            .with_features(FeatureMatrix::new(2, feats).unwrap())
            .unwrap();
        let t = compute_targets(&s, 2.0).unwrap();
        (s, t)
    }

    fn small(epochs: usize) -> NetworkConfig {
        let mut c = NetworkConfig::new(2, 1, 2.0);
        c.encoder_widths = vec![8];
        c.hidden = 8;
        c.window = 64;
        c.epochs = epochs;
        c.learning_rate = 5e-3;
        c
    }

    #[test]
    fn loss_decreases_and_run_is_deterministic() {
        let (s, t) = video();
        let v = [TrainingVideo::new(&s, &t).unwrap()];
        let (p1, log1) = train(&v, &small(30)).unwrap();
        let (p2, log2) = train(&v, &small(30)).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(log1, log2);
        let first = log1.epochs.first().unwrap().loss.total;
        let last = log1.epochs.last().unwrap().loss.total;
        assert!(last < first, "{first} -> {last}");
        // 300 frames / 64 = 5 windows → groups of 3 + 2
        assert_eq!(log1.epochs[0].windows, 5);
        assert_eq!(log1.epochs[0].updates, 2);
    }

    #[test]
    fn rejects_empty_and_missing_phases() {
        assert!(train(&[], &small(1)).is_err());
        let (s, t) = video();
        let v = [TrainingVideo::new(&s, &t).unwrap()];
        let mut c = small(1);
        c.phases = Some(2);
        assert!(train(&v, &c).is_err());
    }

    #[test]
    fn nan_features_abort_with_context() {
        let (s, t) = video();
        let mut data = s.features().unwrap().as_slice().to_vec();
        data[10] = f64::NAN;
        let s = s.with_features(FeatureMatrix::new(2, data).unwrap()).unwrap();
        let v = [TrainingVideo::new(&s, &t).unwrap()];
        match train(&v, &small(1)) {
            Err(Error::Numeric(m)) => assert!(m.contains("epoch 0"), "{m}"),
            other => panic!("{other:?}"),
        }
    }
}
