use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of per-frame feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("feature dimension must be >= 1".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::Dimension(format!(
                "{} values do not form rows of width {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    /// Builds a matrix from rows, rejecting ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Dimension(format!(
                    "ragged feature rows: row {i} has {} values, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> FeatureMatrix {
        FeatureMatrix {
            dim: self.dim,
            data: self.data[start * self.dim..end * self.dim].to_vec(),
        }
    }
}

/// A procedure timeline: per-frame instrument presence, plus optional
/// per-frame features and phase labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureSequence {
    id: String,
    fps: f64,
    instruments: Vec<String>,
    /// Frame-major `len × K` presence flags.
    presence: Vec<bool>,
    features: Option<FeatureMatrix>,
    phases: Option<Vec<usize>>,
    phase_count: Option<usize>,
}

impl ProcedureSequence {
    /// `presence` is frame-major with one row of `instruments.len()` flags per frame.
    pub fn new(
        id: impl Into<String>,
        fps: f64,
        instruments: Vec<String>,
        presence: Vec<bool>,
    ) -> Result<Self> {
        let k = instruments.len();
        if k == 0 {
            return Err(Error::InvalidArgument("sequence needs at least one instrument".into()));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
        }
        if presence.is_empty() || presence.len() % k != 0 {
            return Err(Error::Dimension(format!(
                "{} presence flags do not form nonempty rows of {k} instruments",
                presence.len()
            )));
        }
        Ok(Self {
            id: id.into(),
            fps,
            instruments,
            presence,
            features: None,
            phases: None,
            phase_count: None,
        })
    }

    /// Attaches phase labels; every label must be below `phase_count`.
    pub fn with_phases(mut self, phases: Vec<usize>, phase_count: usize) -> Result<Self> {
        if phases.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} phase labels for {} frames",
                phases.len(),
                self.len()
            )));
        }
        if let Some(bad) = phases.iter().find(|&&p| p >= phase_count) {
            return Err(Error::InvalidArgument(format!(
                "phase index {bad} out of range for {phase_count} phases"
            )));
        }
        self.phases = Some(phases);
        self.phase_count = Some(phase_count);
        Ok(self)
    }

    pub fn with_features(mut self, features: FeatureMatrix) -> Result<Self> {
        if features.rows() != self.len() {
            return Err(Error::Dimension(format!(
                "feature rows ({}) do not match sequence length ({})",
                features.rows(),
                self.len()
            )));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn with_fps(mut self, fps: f64) -> Result<Self> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
        }
        self.fps = fps;
        Ok(self)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.presence.len() / self.instruments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.presence.is_empty()
    }

    pub fn num_instruments(&self) -> usize {
        self.instruments.len()
    }

    pub fn instruments(&self) -> &[String] {
        &self.instruments
    }

    pub fn instrument_index(&self, name: &str) -> Option<usize> {
        self.instruments.iter().position(|n| n == name)
    }

    pub fn present(&self, frame: usize, instrument: usize) -> bool {
        self.presence[frame * self.instruments.len() + instrument]
    }

    pub fn presence(&self) -> &[bool] {
        &self.presence
    }

    pub fn presence_track(&self, instrument: usize) -> Vec<bool> {
        (0..self.len()).map(|t| self.present(t, instrument)).collect()
    }

    pub fn features(&self) -> Option<&FeatureMatrix> {
        self.features.as_ref()
    }

    pub fn phases(&self) -> Option<&[usize]> {
        self.phases.as_deref()
    }

    pub fn phase_count(&self) -> Option<usize> {
        self.phase_count
    }

    /// Duration in minutes.
    pub fn duration_minutes(&self) -> f64 {
        self.len() as f64 / (self.fps * 60.0)
    }

    /// Keeps only the given instruments, in the given order.
    pub fn select_instruments(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::InvalidArgument("no instruments selected".into()));
        }
        let k = self.num_instruments();
        if let Some(&bad) = keep.iter().find(|&&i| i >= k) {
            return Err(Error::InvalidArgument(format!(
                "instrument index {bad} out of range for {k} instruments"
            )));
        }
        let presence = (0..self.len())
            .flat_map(|t| keep.iter().map(move |&i| (t, i)))
            .map(|(t, i)| self.present(t, i))
            .collect();
        Ok(Self {
            id: self.id.clone(),
            fps: self.fps,
            instruments: keep.iter().map(|&i| self.instruments[i].clone()).collect(),
            presence,
            features: self.features.clone(),
            phases: self.phases.clone(),
            phase_count: self.phase_count,
        })
    }

    /// Looks up instruments by name, failing on the first unknown one.
    pub fn select_by_name(&self, names: &[String]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| {
                self.instrument_index(n).ok_or_else(|| {
                    Error::InvalidArgument(format!("sequence {} has no instrument `{n}`", self.id))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.select_instruments(&idx)
    }
}
