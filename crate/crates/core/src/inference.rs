//! Monte-Carlo dropout prediction.
//!
//! `T` forward passes with independent mask sets give samples `f_t` and
//! softmax vectors `p_t` per frame and instrument. The summary holds
//!
//! * `reg_mean = (1/T) Σ f_t` and `reg_epistemic_var = (1/T) Σ (f_t − reg_mean)²`,
//! * `class_mean = (1/T) Σ p_t`,
//! * per class `(1/T) Σ (p_t − class_mean)²` (epistemic) and
//!   `(1/T) Σ p_t (1 − p_t)` (aleatoric), plus both averaged over classes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::Class;
use crate::metrics::Predictions;
use crate::model::{forward, sample_masks, softmax, NetworkParams, RecurrentState, RegressionOutput};
use crate::par::{derive_seed, Exec};
use crate::workflow::FeatureMatrix;

pub const DEFAULT_SAMPLES: usize = 10;
const STREAM_MC: u64 = 0x3c_d0;

/// One posterior sample: regression values (`n × K`) and class
/// probabilities (`n × K × 3`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutputs {
    pub regression: Vec<f64>,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub samples: usize,
    pub horizon: f64,
    pub frames: usize,
    pub instruments: usize,
    pub reg_mean: Vec<f64>,
    pub reg_epistemic_var: Vec<f64>,
    /// `n × K × 3`, classes ordered (anticipating, present, background).
    pub class_mean: Vec<f64>,
    pub class_epistemic_per_class: Vec<f64>,
    pub class_aleatoric_per_class: Vec<f64>,
    pub class_epistemic_var: Vec<f64>,
    pub class_aleatoric_var: Vec<f64>,
    #[serde(skip)]
    pub raw: Option<Vec<SampleOutputs>>,
}

impl PredictiveSummary {
    fn at(&self, frame: usize, inst: usize) -> usize {
        frame * self.instruments + inst
    }

    pub fn reg_mean(&self, frame: usize, inst: usize) -> f64 {
        self.reg_mean[self.at(frame, inst)]
    }

    pub fn reg_var(&self, frame: usize, inst: usize) -> f64 {
        self.reg_epistemic_var[self.at(frame, inst)]
    }

    pub fn class_probs(&self, frame: usize, inst: usize) -> &[f64] {
        let o = self.at(frame, inst) * 3;
        &self.class_mean[o..o + 3]
    }

    pub fn class_epistemic(&self, frame: usize, inst: usize) -> f64 {
        self.class_epistemic_var[self.at(frame, inst)]
    }

    pub fn class_aleatoric(&self, frame: usize, inst: usize) -> f64 {
        self.class_aleatoric_var[self.at(frame, inst)]
    }

    /// Argmax of the mean class distribution; ties go to the earlier class.
    pub fn predicted_class(&self, frame: usize, inst: usize) -> Class {
        let p = self.class_probs(frame, inst);
        let mut best = 0;
        for c in 1..3 {
            if p[c] > p[best] {
                best = c;
            }
        }
        Class::from_index(best).unwrap()
    }

    pub fn regression_predictions(&self) -> Predictions {
        Predictions::new(self.instruments, self.reg_mean.clone()).expect("consistent summary")
    }
}

/// Aggregates samples into a summary, in sample-index order.
pub fn aggregate(samples: &[SampleOutputs], horizon: f64, keep_raw: bool, instruments: usize) -> Result<PredictiveSummary> {
    let t = samples.len();
    if t == 0 {
        return Err(Error::InvalidArgument("sample count T must be >= 1".into()));
    }
    if instruments == 0 {
        return Err(Error::InvalidArgument("need at least one instrument".into()));
    }
    let nk = samples[0].regression.len();
    if nk % instruments != 0 {
        return Err(Error::Dimension("regression values do not form rows".into()));
    }
    if samples
        .iter()
        .any(|s| s.regression.len() != nk || s.probabilities.len() != 3 * nk)
    {
        return Err(Error::Dimension("samples differ in shape".into()));
    }
    let inv_t = 1.0 / t as f64;

    let mut reg_mean = vec![0.0; nk];
    let mut class_mean = vec![0.0; 3 * nk];
    for s in samples {
        reg_mean.iter_mut().zip(&s.regression).for_each(|(m, v)| *m += v);
        class_mean.iter_mut().zip(&s.probabilities).for_each(|(m, v)| *m += v);
    }
    reg_mean.iter_mut().for_each(|m| *m *= inv_t);
    class_mean.iter_mut().for_each(|m| *m *= inv_t);

    let mut reg_var = vec![0.0; nk];
    let mut epi = vec![0.0; 3 * nk];
    let mut ale = vec![0.0; 3 * nk];
    for s in samples {
        for i in 0..nk {
            let d = s.regression[i] - reg_mean[i];
            reg_var[i] += d * d;
        }
        for i in 0..3 * nk {
            let p = s.probabilities[i];
            let d = p - class_mean[i];
            epi[i] += d * d;
            ale[i] += p * (1.0 - p);
        }
    }
    reg_var.iter_mut().for_each(|v| *v *= inv_t);
    epi.iter_mut().for_each(|v| *v *= inv_t);
    ale.iter_mut().for_each(|v| *v *= inv_t);
    let class_avg = |v: &[f64]| -> Vec<f64> { v.chunks_exact(3).map(|c| (c[0] + c[1] + c[2]) / 3.0).collect() };

    Ok(PredictiveSummary {
        samples: t,
        horizon,
        frames: nk / instruments,
        instruments,
        reg_mean,
        reg_epistemic_var: reg_var,
        class_epistemic_var: class_avg(&epi),
        class_aleatoric_var: class_avg(&ale),
        class_mean,
        class_epistemic_per_class: epi,
        class_aleatoric_per_class: ale,
        raw: keep_raw.then(|| samples.to_vec()),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct McOptions {
    pub samples: usize,
    pub seed: u64,
    pub keep_raw: bool,
    pub exec: Exec,
}

impl McOptions {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            keep_raw: false,
            exec: Exec::default(),
        }
    }
}

/// One posterior sample for the whole sequence, starting from a zero state.
pub fn sample_once(params: &NetworkParams, features: &FeatureMatrix, mask_seed: u64) -> Result<SampleOutputs> {
    let cfg = params.config();
    let masks = sample_masks(cfg, mask_seed)?;
    let (out, _) = forward(params, &masks, features, &RecurrentState::zeros(cfg.hidden))?;
    let regression = match cfg.output {
        RegressionOutput::LinearClamped => out.regression.iter().map(|v| v.clamp(0.0, cfg.horizon)).collect(),
        RegressionOutput::ScaledSigmoid => out.regression,
    };
    let probabilities = out.class_logits.chunks_exact(3).flat_map(softmax).collect();
    Ok(SampleOutputs {
        regression,
        probabilities,
    })
}

pub fn mc_predict(params: &NetworkParams, features: &FeatureMatrix, samples: usize, seed: u64) -> Result<PredictiveSummary> {
    mc_predict_with(params, features, &McOptions::new(samples, seed))
}

/// Sample `t` uses the mask seed `derive_seed(seed, ·, t)`, so every execution
/// policy produces the same summary.
pub fn mc_predict_with(params: &NetworkParams, features: &FeatureMatrix, opts: &McOptions) -> Result<PredictiveSummary> {
    if opts.samples == 0 {
        return Err(Error::InvalidArgument("sample count T must be >= 1".into()));
    }
    let cfg = params.config();
    if features.dim() != cfg.input_dim {
        return Err(Error::Dimension(format!(
            "features have dim {}, network expects {}",
            features.dim(),
            cfg.input_dim
        )));
    }
    let samples = opts.exec.try_map(opts.samples, |t| {
        sample_once(params, features, derive_seed(opts.seed, STREAM_MC, t as u64))
    })?;
    aggregate(&samples, cfg.horizon, opts.keep_raw, cfg.instruments)
}

/// Frame/instrument masks of anticipating predictions: regression mean in
/// `(0.1h, 0.9h)`, and class argmax = anticipating.
pub fn anticipating_mask(summary: &PredictiveSummary, h: f64) -> (Vec<bool>, Vec<bool>) {
    let reg = summary.reg_mean.iter().map(|&f| f > 0.1 * h && f < 0.9 * h).collect();
    let cls = (0..summary.frames)
        .flat_map(|t| (0..summary.instruments).map(move |k| (t, k)))
        .map(|(t, k)| summary.predicted_class(t, k) == Class::Anticipating)
        .collect();
    (reg, cls)
}

const CSV_HEADER: &str = "frame,instrument,reg_mean,reg_epistemic_var,p_anticipating,p_present,p_background,\
epistemic_anticipating,epistemic_present,epistemic_background,\
aleatoric_anticipating,aleatoric_present,aleatoric_background,class_epistemic_var,class_aleatoric_var";

impl PredictiveSummary {
    /// One row per frame × instrument, preceded by a `# samples=.. horizon=..` line.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# samples={} horizon={} instruments={}\n{CSV_HEADER}\n",
            self.samples, self.horizon, self.instruments
        );
        for t in 0..self.frames {
            for k in 0..self.instruments {
                let i = self.at(t, k);
                let o = 3 * i;
                let cols = [
                    self.reg_mean[i],
                    self.reg_epistemic_var[i],
                    self.class_mean[o],
                    self.class_mean[o + 1],
                    self.class_mean[o + 2],
                    self.class_epistemic_per_class[o],
                    self.class_epistemic_per_class[o + 1],
                    self.class_epistemic_per_class[o + 2],
                    self.class_aleatoric_per_class[o],
                    self.class_aleatoric_per_class[o + 1],
                    self.class_aleatoric_per_class[o + 2],
                    self.class_epistemic_var[i],
                    self.class_aleatoric_var[i],
                ];
                out.push_str(&format!("{t},{k}"));
                for c in cols {
                    out.push(',');
                    out.push_str(&c.to_string());
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_csv(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let meta = lines.next().map(|(_, l)| l).unwrap_or_default();
        let mut samples = None;
        let mut horizon = None;
        let mut instruments = None;
        for tok in meta.trim_start_matches('#').split_whitespace() {
            match tok.split_once('=') {
                Some(("samples", v)) => samples = v.parse().ok(),
                Some(("horizon", v)) => horizon = v.parse().ok(),
                Some(("instruments", v)) => instruments = v.parse().ok(),
                _ => {}
            }
        }
        let (samples, horizon, k): (usize, f64, usize) = match (samples, horizon, instruments) {
            (Some(s), Some(h), Some(k)) if k > 0 => (s, h, k),
            _ => return Err(Error::parse(origin, 1, "missing `# samples= horizon= instruments=` line")),
        };
        match lines.next() {
            Some((_, l)) if l == CSV_HEADER => {}
            _ => return Err(Error::parse(origin, 2, "unexpected summary header")),
        }
        let mut s = PredictiveSummary {
            samples,
            horizon,
            frames: 0,
            instruments: k,
            reg_mean: vec![],
            reg_epistemic_var: vec![],
            class_mean: vec![],
            class_epistemic_per_class: vec![],
            class_aleatoric_per_class: vec![],
            class_epistemic_var: vec![],
            class_aleatoric_var: vec![],
            raw: None,
        };
        let mut rows = 0usize;
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let line_no = i as u64 + 1;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 15 {
                return Err(Error::parse(origin, line_no, format!("expected 15 fields, found {}", f.len())));
            }
            let (t, inst): (usize, usize) = match (f[0].parse(), f[1].parse()) {
                (Ok(t), Ok(k)) => (t, k),
                _ => return Err(Error::parse(origin, line_no, "bad frame/instrument index")),
            };
            if t != rows / k || inst != rows % k {
                return Err(Error::parse(origin, line_no, "rows out of frame-major order"));
            }
            let v = f[2..]
                .iter()
                .map(|x| x.parse::<f64>().map_err(|_| Error::parse(origin, line_no, format!("invalid real `{x}`"))))
                .collect::<Result<Vec<_>>>()?;
            s.reg_mean.push(v[0]);
            s.reg_epistemic_var.push(v[1]);
            s.class_mean.extend_from_slice(&v[2..5]);
            s.class_epistemic_per_class.extend_from_slice(&v[5..8]);
            s.class_aleatoric_per_class.extend_from_slice(&v[8..11]);
            s.class_epistemic_var.push(v[11]);
            s.class_aleatoric_var.push(v[12]);
            rows += 1;
        }
        if rows == 0 || rows % k != 0 {
            return Err(Error::parse(origin, 3, "summary has no complete frames"));
        }
        s.frames = rows / k;
        Ok(s)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        crate::workflow::write_text(path, &self.to_csv())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, path)
    }

    /// Compact binary: one JSON header line, then the arrays as little-endian
    /// `f64` in field order.
    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let header = serde_json::json!({
            "format": "anticipation-summary/1",
            "samples": self.samples,
            "horizon": self.horizon,
            "frames": self.frames,
            "instruments": self.instruments,
        });
        let mut bytes = serde_json::to_vec(&header)?;
        bytes.push(b'\n');
        for arr in self.arrays() {
            for v in arr {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load_binary(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(path, 1, "missing header line"))?;
        let header: serde_json::Value = serde_json::from_slice(&bytes[..nl])?;
        let get = |k: &str| header.get(k).and_then(|v| v.as_u64()).map(|v| v as usize);
        let (samples, frames, k) = match (get("samples"), get("frames"), get("instruments")) {
            (Some(s), Some(n), Some(k)) if k > 0 => (s, n, k),
            _ => return Err(Error::parse(path, 1, "incomplete summary header")),
        };
        let horizon = header
            .get("horizon")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| Error::parse(path, 1, "missing horizon"))?;
        let nk = frames * k;
        let sizes = [nk, nk, 3 * nk, 3 * nk, 3 * nk, nk, nk];
        let payload = &bytes[nl + 1..];
        if payload.len() != sizes.iter().sum::<usize>() * 8 {
            return Err(Error::Dimension(format!("{}: payload size mismatch", path.display())));
        }
        let mut vals = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |n: usize| -> Vec<f64> { vals.by_ref().take(n).collect() };
        Ok(PredictiveSummary {
            samples,
            horizon,
            frames,
            instruments: k,
            reg_mean: take(sizes[0]),
            reg_epistemic_var: take(sizes[1]),
            class_mean: take(sizes[2]),
            class_epistemic_per_class: take(sizes[3]),
            class_aleatoric_per_class: take(sizes[4]),
            class_epistemic_var: take(sizes[5]),
            class_aleatoric_var: take(sizes[6]),
            raw: None,
        })
    }

    fn arrays(&self) -> [&[f64]; 7] {
        [
            &self.reg_mean,
            &self.reg_epistemic_var,
            &self.class_mean,
            &self.class_epistemic_per_class,
            &self.class_aleatoric_per_class,
            &self.class_epistemic_var,
            &self.class_aleatoric_var,
        ]
    }
}
