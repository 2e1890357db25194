use std::path::{Path, PathBuf};

use anticipation::analysis::{AnalysisConfig, TriggerPair, UncertaintyScale, DEFAULT_PERCENTILES};
use anticipation::baselines::DEFAULT_BINS;
use anticipation::inference::DEFAULT_SAMPLES;
use anticipation::model::{NetworkConfig, RegressionOutput};
use anticipation::workflow::{AnnotationFormat, SimConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Run directory; every artifact lands below it.
    pub out: PathBuf,
    /// Use the data-parallel code paths where available.
    pub parallel: bool,
    pub sim: SimSection,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub analysis: AnalysisSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("run"),
            parallel: true,
            sim: SimSection::default(),
            data: DataSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            analysis: AnalysisSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    CholecLike,
    TriggerDemo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub preset: Preset,
    /// Firing probability and delay (frames) of the `trigger_demo` preset.
    pub trigger_probability: f64,
    pub trigger_delay: f64,
    /// Chance that the `trigger_demo` target is also used once on its own.
    pub trigger_sporadic: f64,
    /// Full simulator description; replaces the preset when given.
    pub spec: Option<SimConfig>,
    pub train_videos: usize,
    pub test_videos: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            preset: Preset::CholecLike,
            trigger_probability: 1.0,
            trigger_delay: 60.0,
            trigger_sporadic: 0.0,
            spec: None,
            train_videos: 24,
            test_videos: 8,
        }
    }
}

impl SimSection {
    pub fn resolve(&self) -> SimConfig {
        match (&self.spec, self.preset) {
            (Some(s), _) => s.clone(),
            (None, Preset::CholecLike) => SimConfig::cholec_like(),
            (None, Preset::TriggerDemo) => {
                SimConfig::trigger_demo(self.trigger_probability, self.trigger_delay, self.trigger_sporadic)
            },
        }
    }
}

/// External annotation/feature files; when unset the run directory's
/// simulated `data/` is used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub format: Option<String>,
    /// Directory of `<id>.f32` / `<id>.csv` feature files.
    pub features: Option<PathBuf>,
    /// Instruments to anticipate; defaults to the dataset's declared targets.
    pub instruments: Option<Vec<String>>,
}

impl DataSection {
    pub fn format(&self) -> Result<AnnotationFormat, CliError> {
        match &self.format {
            None => Ok(AnnotationFormat::GenericCsv),
            Some(f) => f.parse().map_err(|_| CliError::config(format!("data.format: unknown format `{f}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub encoder_widths: Vec<usize>,
    pub hidden: usize,
    pub dropout: f64,
    pub output: RegressionOutput,
    pub lambda: f64,
    pub gamma: f64,
    /// Enables the auxiliary phase head.
    pub phase_head: bool,
    pub lambda_phase: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let n = NetworkConfig::new(1, 1, 1.0);
        Self {
            encoder_widths: n.encoder_widths,
            hidden: n.hidden,
            dropout: n.dropout,
            output: n.output,
            lambda: n.lambda,
            gamma: n.gamma,
            phase_head: false,
            lambda_phase: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub window: usize,
    pub accumulation: usize,
    pub epochs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            learning_rate: NetworkConfig::DEFAULT_LEARNING_RATE,
            window: NetworkConfig::DEFAULT_WINDOW,
            accumulation: NetworkConfig::DEFAULT_ACCUMULATION,
            epochs: NetworkConfig::DEFAULT_EPOCHS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Horizons in minutes; one model and report per horizon.
    pub horizons: Vec<f64>,
    pub samples: usize,
    pub bins: usize,
    /// Also write the compact binary summary next to each CSV.
    pub binary_summaries: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            horizons: vec![2.0, 3.0, 5.0, 7.0],
            samples: DEFAULT_SAMPLES,
            bins: DEFAULT_BINS,
            binary_summaries: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub percentiles: Vec<u32>,
    pub scale: UncertaintyScale,
    pub triggers: Vec<TriggerPair>,
    /// The trigger counts as visible if seen within this many past seconds.
    pub trigger_window_seconds: f64,
    pub plots: bool,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            percentiles: DEFAULT_PERCENTILES.to_vec(),
            scale: UncertaintyScale::Variance,
            triggers: Vec::new(),
            trigger_window_seconds: 0.0,
            plots: false,
        }
    }
}

impl AnalysisSection {
    pub fn resolve(&self, fps: f64) -> AnalysisConfig {
        AnalysisConfig {
            percentiles: self.percentiles.clone(),
            scale: self.scale,
            triggers: self.triggers.clone(),
            trigger_window: (self.trigger_window_seconds * fps).round() as usize,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub horizons: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub samples: Option<usize>,
    pub percentiles: Option<Vec<u32>>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config: {}", e.message())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(h) = &o.horizons {
            self.eval.horizons = h.clone();
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(t) = o.samples {
            self.eval.samples = t;
        }
        if let Some(p) = &o.percentiles {
            self.analysis.percentiles = p.clone();
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.eval.horizons.is_empty() {
            return Err(CliError::config("eval.horizons: at least one horizon required"));
        }
        if let Some(h) = self.eval.horizons.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
            return Err(CliError::config(format!("eval.horizons: {h} is not a positive number of minutes")));
        }
        if self.eval.samples == 0 {
            return Err(CliError::config("eval.samples: T must be >= 1"));
        }
        if self.eval.bins == 0 {
            return Err(CliError::config("eval.bins: must be >= 1"));
        }
        if self.sim.train_videos == 0 || self.sim.test_videos == 0 {
            return Err(CliError::config("sim.train_videos / sim.test_videos: must be >= 1"));
        }
        if let Some(q) = self.analysis.percentiles.iter().find(|q| **q == 0 || **q > 100) {
            return Err(CliError::config(format!("analysis.percentiles: {q} outside 1..=100")));
        }
        if !(self.analysis.trigger_window_seconds >= 0.0) {
            return Err(CliError::config("analysis.trigger_window_seconds: must be >= 0"));
        }
        self.data.format()?;
        self.sim.resolve().validate()?;
        self.network(1, 1, None, self.eval.horizons[0]).validate()?;
        Ok(())
    }

    pub fn network(&self, input_dim: usize, instruments: usize, phases: Option<usize>, horizon: f64) -> NetworkConfig {
        NetworkConfig {
            input_dim,
            encoder_widths: self.model.encoder_widths.clone(),
            hidden: self.model.hidden,
            instruments,
            phases: if self.model.phase_head { phases } else { None },
            dropout: self.model.dropout,
            output: self.model.output,
            horizon,
            lambda: self.model.lambda,
            gamma: self.model.gamma,
            lambda_phase: self.model.lambda_phase,
            learning_rate: self.train.learning_rate,
            window: self.train.window,
            accumulation: self.train.accumulation,
            epochs: self.train.epochs,
            seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved config, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.eval.horizons, vec![2.0, 3.0, 5.0, 7.0]);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let e = RunConfig::parse("[train]\nepoch = 3\n").unwrap_err();
        assert_eq!(e.code, crate::error::ExitCode::Config);
        assert!(RunConfig::parse("sed = 1\n").is_err());
    }

    #[test]
    fn overrides_win_and_resolved_config_round_trips() {
        let mut c = RunConfig::parse("seed = 4\n[eval]\nsamples = 3\n").unwrap();
        c.apply(&Overrides {
            seed: Some(9),
            samples: Some(20),
            horizons: Some(vec![3.0]),
            ..Overrides::default()
        });
        assert_eq!((c.seed, c.eval.samples), (9, 20));
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn inline_sim_spec_parses() {
        let mut c = RunConfig::default();
        c.sim.spec = Some(SimConfig::trigger_demo(0.5, 30.0, 0.5));
        let text = c.to_toml();
        assert!(text.contains("[sim.spec.duration]"), "{text}");
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back.sim.resolve(), SimConfig::trigger_demo(0.5, 30.0, 0.5));
    }

    #[test]
    fn invalid_values_rejected() {
        let mut c = RunConfig::default();
        c.eval.horizons = vec![0.0];
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.model.dropout = 1.0;
        assert_eq!(c.validate().unwrap_err().code, crate::error::ExitCode::Config);
    }
}
