//! Ground-truth anticipation targets.
//!
//! For frame `x` and instrument `τ` the regression target is
//! `r = min(t, h)` where `t` is the time in minutes until the next frame in
//! which `τ` is present (`0` while present) and `h` is the horizon. The class
//! target is `present` when `r = 0`, `anticipating` when `0 < r < h` and
//! `background` when `r = h`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::workflow::ProcedureSequence;

/// Three-way class; the discriminant is the class index used by the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    Anticipating = 0,
    Present = 1,
    Background = 2,
}

impl Class {
    pub const ALL: [Class; 3] = [Class::Anticipating, Class::Present, Class::Background];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Class> {
        Self::ALL.get(i).copied()
    }

    /// Class implied by a regression target under horizon `h`.
    pub fn of_target(r: f64, h: f64) -> Class {
        if r <= 0.0 {
            Class::Present
        } else if r < h {
            Class::Anticipating
        } else {
            Class::Background
        }
    }
}

/// Per-frame, per-instrument targets (frame-major `len × K`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnticipationTargets {
    horizon: f64,
    k: usize,
    remaining: Vec<f64>,
    classes: Vec<Class>,
}

impl AnticipationTargets {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.remaining.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.remaining.is_empty()
    }

    pub fn num_instruments(&self) -> usize {
        self.k
    }

    /// Remaining time in minutes, in `[0, h]`.
    pub fn remaining(&self, frame: usize, instrument: usize) -> f64 {
        self.remaining[frame * self.k + instrument]
    }

    pub fn class(&self, frame: usize, instrument: usize) -> Class {
        self.classes[frame * self.k + instrument]
    }

    pub fn remaining_track(&self, instrument: usize) -> Vec<f64> {
        (0..self.len()).map(|t| self.remaining(t, instrument)).collect()
    }

    pub fn class_track(&self, instrument: usize) -> Vec<Class> {
        (0..self.len()).map(|t| self.class(t, instrument)).collect()
    }

    /// Frames `start..end` as a new target set.
    pub fn slice(&self, start: usize, end: usize) -> AnticipationTargets {
        AnticipationTargets {
            horizon: self.horizon,
            k: self.k,
            remaining: self.remaining[start * self.k..end * self.k].to_vec(),
            classes: self.classes[start * self.k..end * self.k].to_vec(),
        }
    }
}

/// Targets for one presence track given frames-per-second and horizon.
pub fn remaining_time_track(presence: &[bool], fps: f64, h: f64) -> Vec<f64> {
    let frames_per_minute = fps * 60.0;
    let mut out = vec![h; presence.len()];
    let mut next: Option<usize> = None;
    for t in (0..presence.len()).rev() {
        if presence[t] {
            next = Some(t);
        }
        if let Some(n) = next {
            out[t] = ((n - t) as f64 / frames_per_minute).min(h);
        }
    }
    out
}

pub fn compute_targets(seq: &ProcedureSequence, h: f64) -> Result<AnticipationTargets> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {h}")));
    }
    if seq.is_empty() {
        return Err(Error::Empty("sequence has no frames".into()));
    }
    let k = seq.num_instruments();
    let n = seq.len();
    let mut remaining = vec![0.0; n * k];
    for inst in 0..k {
        let track = remaining_time_track(&seq.presence_track(inst), seq.fps(), h);
        for (t, r) in track.into_iter().enumerate() {
            remaining[t * k + inst] = r;
        }
    }
    let classes = remaining.iter().map(|&r| Class::of_target(r, h)).collect();
    Ok(AnticipationTargets {
        horizon: h,
        k,
        remaining,
        classes,
    })
}

/// Computes targets for a batch of sequences.
pub fn compute_targets_batch(
    seqs: &[ProcedureSequence],
    h: f64,
    exec: Exec,
) -> Result<Vec<AnticipationTargets>> {
    exec.try_map(seqs.len(), |i| compute_targets(&seqs[i], h))
}
