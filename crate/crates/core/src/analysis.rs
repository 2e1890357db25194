//! Uncertainty analyses over MC summaries: error–uncertainty correlation,
//! percentile filtering, TP/FP split of the anticipating class and
//! trigger-conditioned uncertainty.
//!
//! Every operation pools frames over videos in (video, frame) order.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::PredictiveSummary;
use crate::labels::{AnticipationTargets, Class};
use crate::metrics::{fmt_opt, ErrorAccumulator};
use crate::par::Exec;

pub const DEFAULT_PERCENTILES: [u32; 10] = [10, 20, 30, 40, 50, 60, 70, 80, 90, 100];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyScale {
    #[default]
    Variance,
    StdDev,
}

impl UncertaintyScale {
    fn apply(self, var: f64) -> f64 {
        match self {
            UncertaintyScale::Variance => var,
            UncertaintyScale::StdDev => var.max(0.0).sqrt(),
        }
    }
}

/// Median; for an even count the mean of the two middle values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pcc {
    pub value: Option<f64>,
    pub points: usize,
    pub reason: Option<String>,
}

/// Pearson correlation; `Err` carries the reason it is undefined.
pub fn pearson(x: &[f64], y: &[f64]) -> std::result::Result<f64, String> {
    if x.len() != y.len() {
        return Err("series differ in length".into());
    }
    let n = x.len();
    if n < 2 {
        return Err(format!("{n} point(s), need at least 2"));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err("errors are constant".into());
    }
    if syy == 0.0 {
        return Err("uncertainties are constant".into());
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn check_inputs(summaries: &[PredictiveSummary], targets: &[AnticipationTargets]) -> Result<usize> {
    if summaries.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} summaries for {} target sets",
            summaries.len(),
            targets.len()
        )));
    }
    let k = summaries.first().map_or(0, |s| s.instruments);
    for (s, t) in summaries.iter().zip(targets) {
        if s.instruments != k || t.num_instruments() != k || s.frames != t.len() {
            return Err(Error::Dimension(format!(
                "summary {}x{} vs targets {}x{}",
                s.frames,
                s.instruments,
                t.len(),
                t.num_instruments()
            )));
        }
    }
    Ok(k)
}

/// A regression-anticipating frame: `0.1h < f̂ < 0.9h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionPoint {
    pub prediction: f64,
    pub target: f64,
    pub error: f64,
    pub variance: f64,
}

/// Regression-anticipating frames of one instrument in pooled order.
pub fn anticipating_points(
    summaries: &[PredictiveSummary],
    targets: &[AnticipationTargets],
    instrument: usize,
    h: f64,
) -> Result<Vec<RegressionPoint>> {
    let k = check_inputs(summaries, targets)?;
    if instrument >= k {
        return Err(Error::InvalidArgument(format!("instrument {instrument} out of range")));
    }
    let mut out = Vec::new();
    for (s, t) in summaries.iter().zip(targets) {
        for frame in 0..s.frames {
            let f = s.reg_mean(frame, instrument).clamp(0.0, h);
            if f > 0.1 * h && f < 0.9 * h {
                let r = t.remaining(frame, instrument);
                out.push(RegressionPoint {
                    prediction: f,
                    target: r,
                    error: (f - r).abs(),
                    variance: s.reg_var(frame, instrument),
                });
            }
        }
    }
    Ok(out)
}

pub fn error_uncertainty_pcc(
    summaries: &[PredictiveSummary],
    targets: &[AnticipationTargets],
    instrument: usize,
    h: f64,
    scale: UncertaintyScale,
) -> Result<Pcc> {
    let pts = anticipating_points(summaries, targets, instrument, h)?;
    let err: Vec<f64> = pts.iter().map(|p| p.error).collect();
    let unc: Vec<f64> = pts.iter().map(|p| scale.apply(p.variance)).collect();
    let (value, reason) = match pearson(&err, &unc) {
        Ok(v) => (Some(v), None),
        Err(r) => (None, Some(r)),
    };
    Ok(Pcc {
        value,
        points: pts.len(),
        reason,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterPoint {
    pub percentile: u32,
    pub retained: usize,
    pub pmae: Option<f64>,
}

/// pMAE over the `q`% least uncertain points, for each `q` in `grid`.
/// `ceil(q·n/100)` points are kept; equal variances keep pooled order.
pub fn filter_curve(points: &[RegressionPoint], h: f64, grid: &[u32]) -> Result<Vec<FilterPoint>> {
    if let Some(q) = grid.iter().find(|&&q| q == 0 || q > 100) {
        return Err(Error::InvalidArgument(format!("percentile {q} outside 1..=100")));
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let mut rank: Vec<usize> = (0..points.len()).collect();
    rank.sort_by(|&a, &b| points[a].variance.total_cmp(&points[b].variance));
    let n = points.len();
    Ok(grid
        .iter()
        .map(|&q| {
            let keep = (q as usize * n).div_ceil(100);
            let mut kept = vec![false; n];
            rank[..keep].iter().for_each(|&i| kept[i] = true);
            let mut acc = ErrorAccumulator::default();
            for (p, _) in points.iter().zip(&kept).filter(|(_, &k)| k) {
                acc.push(p.prediction, p.target, h);
            }
            FilterPoint {
                percentile: q,
                retained: keep,
                pmae: acc.pmae(),
            }
        })
        .collect())
}

pub fn filter_by_uncertainty(
    summaries: &[PredictiveSummary],
    targets: &[AnticipationTargets],
    instrument: usize,
    h: f64,
    grid: &[u32],
) -> Result<Vec<FilterPoint>> {
    filter_curve(&anticipating_points(summaries, targets, instrument, h)?, h, grid)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupMedians {
    pub count: usize,
    pub epistemic: Option<f64>,
    pub aleatoric: Option<f64>,
}

impl GroupMedians {
    fn of(epi: &[f64], ale: &[f64]) -> Self {
        Self {
            count: epi.len(),
            epistemic: median(epi),
            aleatoric: median(ale),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpFp {
    pub true_positive: GroupMedians,
    pub false_positive: GroupMedians,
}

/// Splits class-anticipating predictions (argmax = anticipating) by their
/// ground-truth class. Uncertainties are those of the anticipating class.
pub fn tp_fp_uncertainty(
    summaries: &[PredictiveSummary],
    targets: &[AnticipationTargets],
    instrument: usize,
) -> Result<TpFp> {
    let k = check_inputs(summaries, targets)?;
    if instrument >= k {
        return Err(Error::InvalidArgument(format!("instrument {instrument} out of range")));
    }
    let (mut tp_e, mut tp_a, mut fp_e, mut fp_a) = (vec![], vec![], vec![], vec![]);
    let a = Class::Anticipating.index();
    for (s, t) in summaries.iter().zip(targets) {
        for frame in 0..s.frames {
            if s.predicted_class(frame, instrument) != Class::Anticipating {
                continue;
            }
            let o = (frame * k + instrument) * 3 + a;
            let (e, al) = (s.class_epistemic_per_class[o], s.class_aleatoric_per_class[o]);
            if t.class(frame, instrument) == Class::Anticipating {
                tp_e.push(e);
                tp_a.push(al);
            } else {
                fp_e.push(e);
                fp_a.push(al);
            }
        }
    }
    Ok(TpFp {
        true_positive: GroupMedians::of(&tp_e, &tp_a),
        false_positive: GroupMedians::of(&fp_e, &fp_a),
    })
}

/// Frame-wise uncertainties of one anticipating prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerFrame {
    pub video: usize,
    pub frame: usize,
    pub trigger_visible: bool,
    pub reg_epistemic: f64,
    pub class_epistemic: f64,
    pub class_aleatoric: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConditionMedians {
    pub count: usize,
    pub reg_epistemic: Option<f64>,
    pub class_epistemic: Option<f64>,
    pub class_aleatoric: Option<f64>,
}

impl ConditionMedians {
    fn of(frames: &[&TriggerFrame]) -> Self {
        let col = |f: fn(&TriggerFrame) -> f64| median(&frames.iter().map(|x| f(x)).collect::<Vec<_>>());
        Self {
            count: frames.len(),
            reg_epistemic: col(|x| x.reg_epistemic),
            class_epistemic: col(|x| x.class_epistemic),
            class_aleatoric: col(|x| x.class_aleatoric),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerAnalysis {
    pub target: String,
    pub trigger: String,
    pub window: usize,
    pub visible: ConditionMedians,
    pub not_visible: ConditionMedians,
    pub frames: Vec<TriggerFrame>,
}

/// Class-anticipating predictions for `target`, partitioned by whether the
/// trigger was present in any of the last `window + 1` frames (`window = 0`
/// means the current frame only). `trigger_presence[v]` is the trigger's
/// presence track in video `v`. Uncertainties are class averages.
pub fn trigger_conditional_uncertainty(
    summaries: &[PredictiveSummary],
    targets: &[AnticipationTargets],
    target: usize,
    trigger_presence: &[Vec<bool>],
    window: usize,
) -> Result<Vec<TriggerFrame>> {
    let k = check_inputs(summaries, targets)?;
    if target >= k {
        return Err(Error::InvalidArgument(format!("instrument {target} out of range")));
    }
    if trigger_presence.len() != summaries.len() {
        return Err(Error::Dimension("one trigger track per video required".into()));
    }
    let mut out = Vec::new();
    for (v, (s, track)) in summaries.iter().zip(trigger_presence).enumerate() {
        if track.len() != s.frames {
            return Err(Error::Dimension(format!(
                "video {v}: trigger track has {} frames, summary {}",
                track.len(),
                s.frames
            )));
        }
        let mut last_seen: Option<usize> = None;
        for frame in 0..s.frames {
            if track[frame] {
                last_seen = Some(frame);
            }
            if s.predicted_class(frame, target) != Class::Anticipating {
                continue;
            }
            out.push(TriggerFrame {
                video: v,
                frame,
                trigger_visible: last_seen.is_some_and(|l| frame - l <= window),
                reg_epistemic: s.reg_var(frame, target),
                class_epistemic: s.class_epistemic(frame, target),
                class_aleatoric: s.class_aleatoric(frame, target),
            });
        }
    }
    Ok(out)
}

pub fn summarize_trigger(target: &str, trigger: &str, window: usize, frames: Vec<TriggerFrame>) -> TriggerAnalysis {
    let (vis, not): (Vec<&TriggerFrame>, Vec<&TriggerFrame>) = frames.iter().partition(|f| f.trigger_visible);
    TriggerAnalysis {
        target: target.to_string(),
        trigger: trigger.to_string(),
        window,
        visible: ConditionMedians::of(&vis),
        not_visible: ConditionMedians::of(&not),
        frames,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerPair {
    pub target: String,
    pub trigger: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub percentiles: Vec<u32>,
    pub scale: UncertaintyScale,
    pub triggers: Vec<TriggerPair>,
    /// Trigger counts as visible if seen within this many past frames.
    pub trigger_window: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            percentiles: DEFAULT_PERCENTILES.to_vec(),
            scale: UncertaintyScale::Variance,
            triggers: Vec::new(),
            trigger_window: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentAnalysis {
    pub instrument: String,
    pub pcc: Pcc,
    pub unfiltered_pmae: Option<f64>,
    pub filtering: Vec<FilterPoint>,
    pub tp_fp: TpFp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub horizon: f64,
    pub scale: UncertaintyScale,
    pub instruments: Vec<InstrumentAnalysis>,
    pub triggers: Vec<TriggerAnalysis>,
}

/// Runs all analyses. `presence(video, instrument)` must return the ground
/// truth presence track used for trigger conditioning.
pub fn analyze<F>(
    names: &[String],
    summaries: &[PredictiveSummary],
    targets: &[AnticipationTargets],
    presence: F,
    config: &AnalysisConfig,
    exec: Exec,
) -> Result<AnalysisReport>
where
    F: Fn(usize, usize) -> Vec<bool>,
{
    let k = check_inputs(summaries, targets)?;
    if summaries.is_empty() {
        return Err(Error::Empty("no videos to analyze".into()));
    }
    if names.len() != k {
        return Err(Error::Dimension(format!("{} names for {k} instruments", names.len())));
    }
    let h = targets[0].horizon();
    let instruments = exec.try_map(k, |i| -> Result<InstrumentAnalysis> {
        let pts = anticipating_points(summaries, targets, i, h)?;
        let err: Vec<f64> = pts.iter().map(|p| p.error).collect();
        let unc: Vec<f64> = pts.iter().map(|p| config.scale.apply(p.variance)).collect();
        let (value, reason) = match pearson(&err, &unc) {
            Ok(v) => (Some(v), None),
            Err(r) => (None, Some(r)),
        };
        let mut acc = ErrorAccumulator::default();
        pts.iter().for_each(|p| acc.push(p.prediction, p.target, h));
        Ok(InstrumentAnalysis {
            instrument: names[i].clone(),
            pcc: Pcc {
                value,
                points: pts.len(),
                reason,
            },
            unfiltered_pmae: acc.pmae(),
            filtering: filter_curve(&pts, h, &config.percentiles)?,
            tp_fp: tp_fp_uncertainty(summaries, targets, i)?,
        })
    })?;
    let index = |n: &str| {
        names
            .iter()
            .position(|x| x == n)
            .ok_or_else(|| Error::config("analysis.triggers", format!("unknown instrument `{n}`")))
    };
    let mut triggers = Vec::new();
    for pair in &config.triggers {
        let (tau, sigma) = (index(&pair.target)?, index(&pair.trigger)?);
        if tau == sigma {
            return Err(Error::config("analysis.triggers", "target and trigger must differ"));
        }
        let tracks: Vec<Vec<bool>> = (0..summaries.len()).map(|v| presence(v, sigma)).collect();
        let frames = trigger_conditional_uncertainty(summaries, targets, tau, &tracks, config.trigger_window)?;
        triggers.push(summarize_trigger(&pair.target, &pair.trigger, config.trigger_window, frames));
    }
    Ok(AnalysisReport {
        horizon: h,
        scale: config.scale,
        instruments,
        triggers,
    })
}

fn scale_name(s: UncertaintyScale) -> &'static str {
    match s {
        UncertaintyScale::Variance => "variance",
        UncertaintyScale::StdDev => "std",
    }
}

impl AnalysisReport {
    pub fn pcc_csv(&self) -> String {
        let mut out = String::from("instrument,uncertainty,points,pcc,reason\n");
        for i in &self.instruments {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                i.instrument,
                scale_name(self.scale),
                i.pcc.points,
                fmt_opt(i.pcc.value),
                i.pcc.reason.as_deref().unwrap_or("")
            );
        }
        out
    }

    pub fn filtering_csv(&self) -> String {
        let mut out = String::from("instrument,percentile,retained,pmae,unfiltered_pmae\n");
        for i in &self.instruments {
            for p in &i.filtering {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    i.instrument,
                    p.percentile,
                    p.retained,
                    fmt_opt(p.pmae),
                    fmt_opt(i.unfiltered_pmae)
                );
            }
        }
        out
    }

    pub fn tp_fp_csv(&self) -> String {
        let mut out = String::from("instrument,group,count,median_epistemic,median_aleatoric\n");
        for i in &self.instruments {
            for (g, m) in [("tp", &i.tp_fp.true_positive), ("fp", &i.tp_fp.false_positive)] {
                let _ = writeln!(
                    out,
                    "{},{g},{},{},{}",
                    i.instrument,
                    m.count,
                    fmt_opt(m.epistemic),
                    fmt_opt(m.aleatoric)
                );
            }
        }
        out
    }

    pub fn trigger_csv(&self) -> String {
        let mut out = String::from(
            "target,trigger,window,condition,count,median_reg_epistemic,median_class_epistemic,median_class_aleatoric\n",
        );
        for t in &self.triggers {
            for (c, m) in [("visible", &t.visible), ("not_visible", &t.not_visible)] {
                let _ = writeln!(
                    out,
                    "{},{},{},{c},{},{},{},{}",
                    t.target,
                    t.trigger,
                    t.window,
                    m.count,
                    fmt_opt(m.reg_epistemic),
                    fmt_opt(m.class_epistemic),
                    fmt_opt(m.class_aleatoric)
                );
            }
        }
        out
    }

    pub fn trigger_frames_csv(&self) -> String {
        let mut out =
            String::from("target,trigger,video,frame,trigger_visible,reg_epistemic,class_epistemic,class_aleatoric\n");
        for t in &self.triggers {
            for f in &t.frames {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    t.target,
                    t.trigger,
                    f.video,
                    f.frame,
                    u8::from(f.trigger_visible),
                    f.reg_epistemic,
                    f.class_epistemic,
                    f.class_aleatoric
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{aggregate, SampleOutputs};
    use crate::labels::compute_targets;
    use crate::workflow::ProcedureSequence;

    #[test]
    fn pearson_hand_cases() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson(&[1.0, 2.0, 3.0], &[0.5, 0.5, 0.5]).is_err());
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn pearson_affine_invariance() {
        let x = [0.3, 1.2, 0.7, 2.2, 0.1];
        let y = [0.02, 0.5, 0.1, 0.4, 0.05];
        let r = pearson(&x, &y).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| 3.0 * v + 7.0).collect();
        let ys: Vec<f64> = y.iter().map(|v| 0.25 * v - 1.0).collect();
        assert!((pearson(&xs, &ys).unwrap() - r).abs() < 1e-12);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[0.3, 0.1, 0.2]), Some(0.2));
        assert_eq!(median(&[0.1, 0.1]), Some(0.1));
        assert_eq!(median(&[0.4, 0.6]), Some(0.5));
        assert_eq!(median(&[]), None);
    }

    fn point(pred: f64, err: f64, var: f64) -> RegressionPoint {
        RegressionPoint {
            prediction: pred,
            target: pred + err,
            error: err,
            variance: var,
        }
    }

    #[test]
    fn filtering_hand_cases() {
        let pts = [point(1.0, 0.2, 0.01), point(1.5, 1.0, 0.5)];
        let c = filter_curve(&pts, 3.0, &[50, 100]).unwrap();
        assert!((c[0].pmae.unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(c[0].retained, 1);
        assert!((c[1].pmae.unwrap() - 0.6).abs() < 1e-12);
        assert!(filter_curve(&[], 3.0, &[50]).unwrap().is_empty());
        assert!(filter_curve(&pts, 3.0, &[0]).is_err());
    }

    #[test]
    fn equal_uncertainties_keep_frame_order() {
        let pts = [point(1.0, 0.4, 0.1), point(1.0, 0.8, 0.1), point(1.0, 0.2, 0.1), point(1.0, 0.6, 0.1)];
        let c = filter_curve(&pts, 3.0, &[25, 50]).unwrap();
        assert!((c[0].pmae.unwrap() - 0.4).abs() < 1e-12);
        assert!((c[1].pmae.unwrap() - 0.6).abs() < 1e-12);
    }

    fn summary(reg: &[f64], probs: &[[f64; 3]]) -> PredictiveSummary {
        aggregate(
            &[SampleOutputs {
                regression: reg.to_vec(),
                probabilities: probs.iter().flatten().copied().collect(),
            }],
            3.0,
            false,
            1,
        )
        .unwrap()
    }

    fn targets(presence: Vec<bool>) -> AnticipationTargets {
        compute_targets(&ProcedureSequence::new("t", 1.0 / 60.0, vec!["x".into()], presence).unwrap(), 3.0).unwrap()
    }

    #[test]
    fn tp_fp_split() {
        // one frame per minute: frames 1 and 2 anticipate the use at frame 3
        let t = targets(vec![false, false, false, true, false, false, false, false]);
        let ant = [0.5, 0.25, 0.25];
        let bg = [0.1, 0.1, 0.8];
        let s = summary(&[0.0; 8], &[bg, ant, ant, bg, bg, bg, bg, [0.5, 0.5, 0.0]]);
        let r = tp_fp_uncertainty(&[s], &[t], 0).unwrap();
        assert_eq!(r.true_positive.count, 2);
        assert_eq!(r.false_positive.count, 1);
        assert_eq!(r.false_positive.aleatoric, Some(0.25));
        assert_eq!(r.true_positive.aleatoric, Some(0.25));
        assert_eq!(r.true_positive.epistemic, Some(0.0));
    }

    #[test]
    fn all_correct_leaves_fp_absent() {
        let t = targets(vec![false, false, true]);
        let s = summary(&[0.0; 3], &[[0.9, 0.05, 0.05], [0.9, 0.05, 0.05], [0.0, 1.0, 0.0]]);
        let r = tp_fp_uncertainty(&[s], &[t], 0).unwrap();
        assert_eq!(r.false_positive.count, 0);
        assert_eq!(r.false_positive.aleatoric, None);
    }

    #[test]
    fn trigger_partition_and_window() {
        let t = targets(vec![false; 6]);
        let ant = [0.6, 0.2, 0.2];
        let s = summary(&[1.0; 6], &[ant; 6]);
        let track = vec![false, true, false, false, false, false];
        let f = trigger_conditional_uncertainty(&[s.clone()], &[t.clone()], 0, &[track.clone()], 0).unwrap();
        assert_eq!(f.iter().filter(|x| x.trigger_visible).count(), 1);
        let f = trigger_conditional_uncertainty(&[s.clone()], &[t.clone()], 0, &[track], 2).unwrap();
        assert_eq!(f.iter().filter(|x| x.trigger_visible).map(|x| x.frame).collect::<Vec<_>>(), vec![1, 2, 3]);
        let never = trigger_conditional_uncertainty(&[s], &[t], 0, &[vec![false; 6]], 0).unwrap();
        let a = summarize_trigger("x", "y", 0, never);
        assert_eq!(a.visible.count, 0);
        assert_eq!(a.visible.class_aleatoric, None);
    }

    #[test]
    fn trigger_medians_from_frames() {
        let fr = |vis: bool, u: f64| TriggerFrame {
            video: 0,
            frame: 0,
            trigger_visible: vis,
            reg_epistemic: u,
            class_epistemic: u,
            class_aleatoric: u,
        };
        let a = summarize_trigger("b", "a", 0, vec![fr(true, 0.1), fr(false, 0.4), fr(true, 0.1), fr(false, 0.6)]);
        assert_eq!(a.visible.class_aleatoric, Some(0.1));
        assert_eq!(a.not_visible.class_aleatoric, Some(0.5));
        assert_eq!(a.not_visible.count, 2);
    }

    #[test]
    fn full_report_endpoint_identity() {
        let t = targets(vec![false, false, false, false, true, false, false, false, false, true]);
        let reg = [2.5, 2.1, 1.2, 0.5, 0.0, 2.9, 2.0, 1.7, 1.1, 0.0];
        let mut s = summary(&reg, &[[0.5, 0.25, 0.25]; 10]);
        s.reg_epistemic_var = (0..10).map(|i| 0.01 * (i % 4) as f64).collect();
        let names = vec!["x".to_string()];
        let cfg = AnalysisConfig::default();
        let rep = analyze(&names, &[s], &[t], |_, _| vec![false; 10], &cfg, Exec::Sequential).unwrap();
        let i = &rep.instruments[0];
        assert_eq!(i.filtering.last().unwrap().pmae, i.unfiltered_pmae);
        assert!(rep.pcc_csv().starts_with("instrument,uncertainty"));
        assert_eq!(rep.filtering_csv().lines().count(), 11);
    }
}
