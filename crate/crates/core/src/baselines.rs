//! Histogram baselines.
//!
//! For each instrument, bin `i` of a `B`-bin histogram counts the present
//! frames whose normalised progress falls in `[i/B, (i+1)/B)`, summed over the
//! training videos. Bins whose count is strictly above a learned threshold
//! form an estimated presence curve, which is expanded block-wise to a video
//! length and turned into remaining-time predictions. `Mean` expands to the
//! mean training duration; `Oracle` expands to each video's true duration.
//!
//! Thresholds are chosen per instrument by exhaustive search over the distinct
//! bin counts plus a "never present" sentinel, minimising pooled train-set
//! wMAE; ties go to the larger threshold.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::remaining_time_track;
use crate::metrics::{ErrorAccumulator, Predictions};
use crate::par::Exec;
use crate::workflow::ProcedureSequence;

pub const DEFAULT_BINS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    Mean,
    Oracle,
}

impl std::str::FromStr for BaselineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "oracle" => Ok(Self::Oracle),
            other => Err(Error::InvalidArgument(format!("unknown baseline mode `{other}`"))),
        }
    }
}

impl BaselineMode {
    pub fn method_name(self) -> &'static str {
        match self {
            BaselineMode::Mean => "MeanHist",
            BaselineMode::Oracle => "OracleHist",
        }
    }
}

/// Histogram threshold; `None` is the sentinel above every count.
pub type Threshold = Option<u64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub mode: BaselineMode,
    pub bins: usize,
    pub horizon: f64,
    pub fps: f64,
    /// Mean training duration in frames.
    pub mean_duration: usize,
    pub instruments: Vec<String>,
    pub hist: Vec<Vec<u64>>,
    pub thresholds: Vec<Threshold>,
    /// Train-set wMAE reached by the chosen threshold.
    pub train_wmae: Vec<Option<f64>>,
}

/// Bin of frame `frame` in a video of `len` frames.
pub fn bin_of(frame: usize, len: usize, bins: usize) -> usize {
    ((frame as u128 * bins as u128 / len as u128) as usize).min(bins - 1)
}

/// Present frames per bin for one instrument across videos.
pub fn occurrence_histogram(train: &[ProcedureSequence], instrument: usize, bins: usize) -> Vec<u64> {
    let mut hist = vec![0u64; bins];
    for seq in train {
        for t in 0..seq.len() {
            if seq.present(t, instrument) {
                hist[bin_of(t, seq.len(), bins)] += 1;
            }
        }
    }
    hist
}

/// Bins strictly above the threshold.
pub fn presence_curve(hist: &[u64], threshold: Threshold) -> Vec<bool> {
    match threshold {
        Some(th) => hist.iter().map(|&c| c > th).collect(),
        None => vec![false; hist.len()],
    }
}

/// Block-wise (nearest-bin) expansion of a bin curve to `len` frames.
pub fn expand_curve(curve: &[bool], len: usize) -> Vec<bool> {
    (0..len).map(|j| curve[bin_of(j, len, curve.len())]).collect()
}

/// Remaining-time predictions from a curve, for an evaluated video of
/// `eval_len` frames. The curve is expanded to `expand_len` frames; frames past
/// `expand_len` predict `h`.
pub fn curve_predictions(curve: &[bool], expand_len: usize, eval_len: usize, fps: f64, h: f64) -> Vec<f64> {
    let track = remaining_time_track(&expand_curve(curve, expand_len), fps, h);
    (0..eval_len).map(|j| track.get(j).copied().unwrap_or(h)).collect()
}

/// Candidate thresholds: distinct bin counts ascending, then the sentinel.
pub fn candidate_thresholds(hist: &[u64]) -> Vec<Threshold> {
    let mut counts: Vec<u64> = hist.to_vec();
    counts.sort_unstable();
    counts.dedup();
    counts.into_iter().map(Some).chain(std::iter::once(None)).collect()
}

struct TrainTrack<'a> {
    len: usize,
    targets: &'a [f64],
}

fn score(
    curve: &[bool],
    tracks: &[TrainTrack<'_>],
    mode: BaselineMode,
    mean_duration: usize,
    fps: f64,
    h: f64,
) -> Option<f64> {
    let mut acc = ErrorAccumulator::default();
    let mean_track = (mode == BaselineMode::Mean)
        .then(|| remaining_time_track(&expand_curve(curve, mean_duration), fps, h));
    for tr in tracks {
        let preds = match &mean_track {
            Some(track) => (0..tr.len).map(|j| track.get(j).copied().unwrap_or(h)).collect(),
            None => curve_predictions(curve, tr.len, tr.len, fps, h),
        };
        for (p, r) in preds.into_iter().zip(tr.targets) {
            acc.push(p, *r, h);
        }
    }
    acc.wmae()
}

fn check_train(train: &[ProcedureSequence]) -> Result<()> {
    let first = train
        .first()
        .ok_or_else(|| Error::Empty("baseline train set is empty".into()))?;
    for s in train {
        if s.instruments() != first.instruments() {
            return Err(Error::InvalidArgument(format!(
                "sequence {} has different instruments than {}",
                s.id(),
                first.id()
            )));
        }
        if s.fps() != first.fps() {
            return Err(Error::InvalidArgument(format!("sequence {} has a different fps", s.id())));
        }
    }
    Ok(())
}

pub fn fit_baseline(train: &[ProcedureSequence], h: f64, bins: usize, mode: BaselineMode) -> Result<BaselineModel> {
    fit_baseline_with(train, h, bins, mode, Exec::default())
}

pub fn fit_baseline_with(
    train: &[ProcedureSequence],
    h: f64,
    bins: usize,
    mode: BaselineMode,
    exec: Exec,
) -> Result<BaselineModel> {
    check_train(train)?;
    if bins == 0 {
        return Err(Error::InvalidArgument("bin count must be >= 1".into()));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {h}")));
    }
    let fps = train[0].fps();
    let k = train[0].num_instruments();
    let total: usize = train.iter().map(ProcedureSequence::len).sum();
    let mean_duration = ((total as f64 / train.len() as f64).round() as usize).max(1);
    let targets: Vec<Vec<Vec<f64>>> = exec.map(train.len(), |v| {
        (0..k)
            .map(|i| remaining_time_track(&train[v].presence_track(i), fps, h))
            .collect()
    });

    let fitted = exec.map(k, |inst| {
        let hist = occurrence_histogram(train, inst, bins);
        let tracks: Vec<TrainTrack<'_>> = train
            .iter()
            .zip(&targets)
            .map(|(s, t)| TrainTrack {
                len: s.len(),
                targets: &t[inst],
            })
            .collect();
        let mut best: Option<(Threshold, Option<f64>)> = None;
        for th in candidate_thresholds(&hist) {
            let w = score(&presence_curve(&hist, th), &tracks, mode, mean_duration, fps, h);
            // ascending candidates with `<=` keeps the largest of tied minima
            let better = match (&best, w) {
                (None, _) => true,
                (Some((_, Some(b))), Some(w)) => w <= *b,
                (Some((_, None)), Some(_)) => true,
                (Some(_), None) => false,
            };
            if better {
                best = Some((th, w));
            }
        }
        let (th, w) = best.expect("candidate set contains the sentinel");
        (hist, th, w)
    });

    let mut model = BaselineModel {
        mode,
        bins,
        horizon: h,
        fps,
        mean_duration,
        instruments: train[0].instruments().to_vec(),
        hist: Vec::with_capacity(k),
        thresholds: Vec::with_capacity(k),
        train_wmae: Vec::with_capacity(k),
    };
    for (hist, th, w) in fitted {
        model.hist.push(hist);
        model.thresholds.push(th);
        model.train_wmae.push(w);
    }
    Ok(model)
}

impl BaselineModel {
    pub fn presence_curves(&self) -> Vec<Vec<bool>> {
        self.hist
            .iter()
            .zip(&self.thresholds)
            .map(|(h, &t)| presence_curve(h, t))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::workflow::write_text(path, &serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: BaselineModel = serde_json::from_str(&text)?;
        if model.bins == 0
            || model.hist.len() != model.instruments.len()
            || model.thresholds.len() != model.instruments.len()
            || model.hist.iter().any(|h| h.len() != model.bins)
        {
            return Err(Error::Serde(format!("{}: inconsistent baseline model", path.display())));
        }
        Ok(model)
    }
}

/// Predictions for a video of `duration` frames.
///
/// Oracle mode requires the duration and expands to it. Mean mode always
/// expands to the mean training duration; `duration` only sets the output
/// length (defaulting to the mean duration).
pub fn predict_baseline(model: &BaselineModel, duration: Option<usize>) -> Result<Predictions> {
    let (expand, eval) = match (model.mode, duration) {
        (BaselineMode::Oracle, None) => {
            return Err(Error::InvalidArgument(
                "oracle baseline needs the video duration".into(),
            ))
        }
        (BaselineMode::Oracle, Some(d)) => (d, d),
        (BaselineMode::Mean, d) => (model.mean_duration, d.unwrap_or(model.mean_duration)),
    };
    if eval == 0 {
        return Err(Error::InvalidArgument("duration must be >= 1 frame".into()));
    }
    let columns: Vec<Vec<f64>> = model
        .presence_curves()
        .iter()
        .map(|c| curve_predictions(c, expand, eval, model.fps, model.horizon))
        .collect();
    Predictions::from_columns(&columns)
}
