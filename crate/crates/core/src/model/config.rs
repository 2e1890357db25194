use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// How the regression head's pre-activation becomes minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionOutput {
    /// Identity during training; clamped to `[0, h]` at prediction time.
    LinearClamped,
    /// `h · sigmoid(z)`.
    ScaledSigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub encoder_widths: Vec<usize>,
    pub hidden: usize,
    pub instruments: usize,
    /// Phase classes for the auxiliary phase head, if enabled.
    pub phases: Option<usize>,
    pub dropout: f64,
    pub output: RegressionOutput,
    /// Horizon in minutes.
    pub horizon: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Phase cross-entropy weight; falls back to `lambda`.
    pub lambda_phase: Option<f64>,
    pub learning_rate: f64,
    /// Frames per truncated-BPTT window.
    pub window: usize,
    /// Windows per optimiser step.
    pub accumulation: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl NetworkConfig {
    pub const DEFAULT_DROPOUT: f64 = 0.2;
    pub const DEFAULT_LAMBDA: f64 = 1e-2;
    pub const DEFAULT_GAMMA: f64 = 1e-5;
    pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;
    pub const DEFAULT_WINDOW: usize = 128;
    pub const DEFAULT_ACCUMULATION: usize = 3;
    pub const DEFAULT_EPOCHS: usize = 100;

    pub fn new(input_dim: usize, instruments: usize, horizon: f64) -> Self {
        Self {
            input_dim,
            encoder_widths: vec![64, 64],
            hidden: 64,
            instruments,
            phases: None,
            dropout: Self::DEFAULT_DROPOUT,
            output: RegressionOutput::LinearClamped,
            horizon,
            lambda: Self::DEFAULT_LAMBDA,
            gamma: Self::DEFAULT_GAMMA,
            lambda_phase: None,
            learning_rate: Self::DEFAULT_LEARNING_RATE,
            window: Self::DEFAULT_WINDOW,
            accumulation: Self::DEFAULT_ACCUMULATION,
            epochs: Self::DEFAULT_EPOCHS,
            seed: 0,
        }
    }

    /// Width of the encoder output that feeds the recurrent core.
    pub fn encoded_dim(&self) -> usize {
        self.encoder_widths.last().copied().unwrap_or(self.input_dim)
    }

    pub fn phase_weight(&self) -> f64 {
        self.lambda_phase.unwrap_or(self.lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("input_dim", "must be >= 1"));
        }
        if self.encoder_widths.iter().any(|&w| w == 0) {
            return Err(Error::config("encoder_widths", "widths must be >= 1"));
        }
        if self.hidden == 0 {
            return Err(Error::config("hidden", "must be >= 1"));
        }
        if self.instruments == 0 {
            return Err(Error::config("instruments", "must be >= 1"));
        }
        if self.phases == Some(0) {
            return Err(Error::config("phases", "must be >= 1 when set"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", "must be in [0, 1)"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::config("horizon", "must be positive"));
        }
        for (name, v) in [("lambda", self.lambda), ("gamma", self.gamma), ("lambda_phase", self.phase_weight())] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be >= 0"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if self.window == 0 {
            return Err(Error::config("window", "must be >= 1"));
        }
        if self.accumulation == 0 {
            return Err(Error::config("accumulation", "must be >= 1"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
