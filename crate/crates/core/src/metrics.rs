//! Frame-wise anticipation errors.
//!
//! `wMAE` averages the MAE over anticipating frames (`0 < r < h`) and over
//! background frames (`r = h`); frames where the instrument is present are in
//! neither group. `pMAE` is the MAE over frames whose prediction lies strictly
//! inside `(0.1h, 0.9h)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::AnticipationTargets;

/// Frame-major `len × K` regression predictions in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    k: usize,
    values: Vec<f64>,
}

impl Predictions {
    pub fn new(k: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 || values.len() % k != 0 {
            return Err(Error::Dimension(format!(
                "{} prediction values do not form rows of {k}",
                values.len()
            )));
        }
        Ok(Self { k, values })
    }

    /// Builds from per-instrument columns of equal length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let k = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension("prediction columns differ in length".into()));
        }
        let values = (0..n).flat_map(|t| columns.iter().map(move |c| c[t])).collect();
        Self::new(k, values)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_instruments(&self) -> usize {
        self.k
    }

    pub fn get(&self, frame: usize, instrument: usize) -> f64 {
        self.values[frame * self.k + instrument]
    }

    pub fn column(&self, instrument: usize) -> Vec<f64> {
        (0..self.len()).map(|t| self.get(t, instrument)).collect()
    }

    /// Clamps every value into `[0, h]`.
    pub fn clamped(&self, h: f64) -> Predictions {
        Predictions {
            k: self.k,
            values: self.values.iter().map(|v| v.clamp(0.0, h)).collect(),
        }
    }
}

fn mean(sum: f64, n: usize) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

/// Per-group error sums for one instrument, accumulated over videos.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorAccumulator {
    anticipating_sum: f64,
    anticipating_n: usize,
    background_sum: f64,
    background_n: usize,
    precision_sum: f64,
    precision_n: usize,
}

impl ErrorAccumulator {
    /// Adds one frame. `pred` is clamped into `[0, h]` first.
    pub fn push(&mut self, pred: f64, target: f64, h: f64) {
        let pred = pred.clamp(0.0, h);
        let err = (pred - target).abs();
        if target > 0.0 && target < h {
            self.anticipating_sum += err;
            self.anticipating_n += 1;
        } else if target >= h {
            self.background_sum += err;
            self.background_n += 1;
        }
        if pred > 0.1 * h && pred < 0.9 * h {
            self.precision_sum += err;
            self.precision_n += 1;
        }
    }

    pub fn wmae(&self) -> Option<f64> {
        match (
            mean(self.anticipating_sum, self.anticipating_n),
            mean(self.background_sum, self.background_n),
        ) {
            (Some(a), Some(b)) => Some(0.5 * a + 0.5 * b),
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(b),
            (None, None) => None,
        }
    }

    pub fn pmae(&self) -> Option<f64> {
        mean(self.precision_sum, self.precision_n)
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        (self.anticipating_n, self.background_n, self.precision_n)
    }
}

fn accumulate(pred: &[f64], target: &[f64], h: f64) -> Result<ErrorAccumulator> {
    if pred.len() != target.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    let mut acc = ErrorAccumulator::default();
    for (&p, &r) in pred.iter().zip(target) {
        acc.push(p, r, h);
    }
    Ok(acc)
}

/// wMAE of one instrument track; `None` when neither group has frames.
pub fn wmae(pred: &[f64], target: &[f64], h: f64) -> Result<Option<f64>> {
    Ok(accumulate(pred, target, h)?.wmae())
}

/// pMAE of one instrument track; `None` when no prediction is anticipating.
pub fn pmae(pred: &[f64], target: &[f64], h: f64) -> Result<Option<f64>> {
    Ok(accumulate(pred, target, h)?.pmae())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentMetrics {
    pub instrument: String,
    pub wmae: Option<f64>,
    pub pmae: Option<f64>,
    pub anticipating_frames: usize,
    pub background_frames: usize,
    pub pmae_frames: usize,
}

/// Mean over instruments, ignoring absent values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMetric {
    pub value: Option<f64>,
    pub participating: usize,
}

impl MeanMetric {
    fn of(values: impl Iterator<Item = Option<f64>>) -> Self {
        let present: Vec<f64> = values.flatten().collect();
        MeanMetric {
            value: mean(present.iter().sum(), present.len()),
            participating: present.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub horizon: f64,
    pub instruments: Vec<InstrumentMetrics>,
    pub mean_wmae: MeanMetric,
    pub mean_pmae: MeanMetric,
}

/// Pools frames of all videos per instrument and computes both metrics.
pub fn evaluate(
    names: &[String],
    predictions: &[Predictions],
    targets: &[AnticipationTargets],
) -> Result<MetricsReport> {
    if predictions.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} prediction sets for {} target sets",
            predictions.len(),
            targets.len()
        )));
    }
    let first = targets
        .first()
        .ok_or_else(|| Error::Empty("no videos to evaluate".into()))?;
    let h = first.horizon();
    let k = names.len();
    let mut acc = vec![ErrorAccumulator::default(); k];
    for (p, t) in predictions.iter().zip(targets) {
        if p.num_instruments() != k || t.num_instruments() != k || p.len() != t.len() {
            return Err(Error::Dimension(format!(
                "prediction {}x{} vs target {}x{} for {k} instruments",
                p.len(),
                p.num_instruments(),
                t.len(),
                t.num_instruments()
            )));
        }
        if t.horizon() != h {
            return Err(Error::InvalidArgument("targets mix horizons".into()));
        }
        for frame in 0..t.len() {
            for (inst, a) in acc.iter_mut().enumerate() {
                a.push(p.get(frame, inst), t.remaining(frame, inst), h);
            }
        }
    }
    let instruments: Vec<InstrumentMetrics> = names
        .iter()
        .zip(&acc)
        .map(|(name, a)| {
            let (na, nb, np) = a.counts();
            InstrumentMetrics {
                instrument: name.clone(),
                wmae: a.wmae(),
                pmae: a.pmae(),
                anticipating_frames: na,
                background_frames: nb,
                pmae_frames: np,
            }
        })
        .collect();
    Ok(MetricsReport {
        horizon: h,
        mean_wmae: MeanMetric::of(instruments.iter().map(|m| m.wmae)),
        mean_pmae: MeanMetric::of(instruments.iter().map(|m| m.pmae)),
        instruments,
    })
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl MetricsReport {
    pub fn instrument(&self, name: &str) -> Option<&InstrumentMetrics> {
        self.instruments.iter().find(|m| m.instrument == name)
    }

    pub fn csv_header() -> String {
        "instrument,wmae,pmae,anticipating_frames,background_frames,pmae_frames".to_string()
    }

    /// Instrument-wise CSV with a trailing `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = Self::csv_header();
        out.push('\n');
        for m in &self.instruments {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                m.instrument,
                fmt_opt(m.wmae),
                fmt_opt(m.pmae),
                m.anticipating_frames,
                m.background_frames,
                m.pmae_frames
            ));
        }
        out.push_str(&format!(
            "mean,{},{},{},{},\n",
            fmt_opt(self.mean_wmae.value),
            fmt_opt(self.mean_pmae.value),
            self.mean_wmae.participating,
            self.mean_pmae.participating
        ));
        out
    }
}

/// Methods × horizons table of mean-over-instrument errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<(String, Vec<MetricsReport>)>,
}

impl MetricsTable {
    pub fn push(&mut self, method: impl Into<String>, report: MetricsReport) {
        let method = method.into();
        match self.rows.iter_mut().find(|(m, _)| *m == method) {
            Some((_, reports)) => reports.push(report),
            None => self.rows.push((method, vec![report])),
        }
    }

    fn horizons(&self) -> Vec<f64> {
        let mut hs: Vec<f64> = self
            .rows
            .iter()
            .flat_map(|(_, r)| r.iter().map(|m| m.horizon))
            .collect();
        hs.sort_by(f64::total_cmp);
        hs.dedup();
        hs
    }

    pub fn to_csv(&self) -> String {
        let hs = self.horizons();
        let mut out = String::from("method");
        for h in &hs {
            out.push_str(&format!(",h{h}_wmae,h{h}_pmae"));
        }
        out.push('\n');
        for (method, reports) in &self.rows {
            out.push_str(method);
            for h in &hs {
                match reports.iter().find(|r| r.horizon == *h) {
                    Some(r) => out.push_str(&format!(
                        ",{},{}",
                        fmt_opt(r.mean_wmae.value),
                        fmt_opt(r.mean_pmae.value)
                    )),
                    None => out.push_str(",NA,NA"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_prediction_is_zero() {
        let r = [0.5, 1.0, 3.0, 3.0, 0.0];
        assert_eq!(wmae(&r, &r, 3.0).unwrap(), Some(0.0));
    }

    #[test]
    fn wmae_hand_case() {
        let r = [1.0, 2.0, 3.0, 3.0];
        let p = [3.0, 3.0, 3.0, 3.0];
        assert_eq!(wmae(&p, &r, 3.0).unwrap(), Some(0.75));
    }

    #[test]
    fn pmae_hand_case() {
        let p = [1.0, 2.0];
        let r = [1.5, 3.0];
        assert_eq!(pmae(&p, &r, 3.0).unwrap(), Some(0.75));
    }

    #[test]
    fn pmae_absent_without_anticipating_predictions() {
        // boundaries 0.3 and 2.7 are excluded
        let p = [3.0, 0.0, 0.3, 2.7];
        let r = [1.0, 1.0, 1.0, 1.0];
        assert_eq!(pmae(&p, &r, 3.0).unwrap(), None);
    }

    #[test]
    fn one_empty_group_falls_back() {
        assert_eq!(wmae(&[2.0], &[1.0], 3.0).unwrap(), Some(1.0));
        assert_eq!(wmae(&[2.0], &[3.0], 3.0).unwrap(), Some(1.0));
        assert_eq!(wmae(&[2.0], &[0.0], 3.0).unwrap(), None);
        assert!(wmae(&[2.0], &[0.0, 1.0], 3.0).is_err());
    }

    #[test]
    fn mean_ignores_absent() {
        let m = MeanMetric::of([Some(1.0), None, Some(3.0)].into_iter());
        assert_eq!(m.value, Some(2.0));
        assert_eq!(m.participating, 2);
    }

    proptest! {
        #[test]
        fn bounds_permutation_and_constant_h(
            pairs in proptest::collection::vec((0.0f64..3.0, prop_oneof![0.0f64..3.0, Just(3.0), Just(0.0)]), 2..100),
            rot in 0usize..100,
        ) {
            let h = 3.0;
            let p: Vec<f64> = pairs.iter().map(|x| x.0).collect();
            let r: Vec<f64> = pairs.iter().map(|x| x.1).collect();
            let w = wmae(&p, &r, h).unwrap();
            let q = pmae(&p, &r, h).unwrap();
            if let Some(w) = w { prop_assert!((0.0..=h).contains(&w)); }
            if let Some(q) = q { prop_assert!((0.0..=h).contains(&q)); }

            let k = rot % p.len();
            let mut p2 = p.clone(); p2.rotate_left(k);
            let mut r2 = r.clone(); r2.rotate_left(k);
            let w2 = wmae(&p2, &r2, h).unwrap();
            prop_assert_eq!(w.is_some(), w2.is_some());
            if let (Some(a), Some(b)) = (w, w2) { prop_assert!((a - b).abs() < 1e-12); }

            let constant = vec![h; r.len()];
            let ant: Vec<f64> = r.iter().copied().filter(|&x| x > 0.0 && x < h).collect();
            let has_bg = r.iter().any(|&x| x >= h);
            if !ant.is_empty() && has_bg {
                let expect = 0.5 * ant.iter().map(|x| h - x).sum::<f64>() / ant.len() as f64;
                prop_assert!((wmae(&constant, &r, h).unwrap().unwrap() - expect).abs() < 1e-12);
            }
        }
    }
}
