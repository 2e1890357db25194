//! Synthetic procedure generator.
//!
//! A procedure is an ordered run of phases whose lengths are proportional to
//! randomly drawn weights and scaled to a randomly drawn total duration.
//! Instruments are placed as segments by per-phase usage rules, then trigger
//! rules place target segments a fixed delay after each trigger onset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::sequence::{FeatureMatrix, ProcedureSequence};
use crate::error::{Error, Result};
use crate::par::{derive_seed, Exec};

const STREAM_SEQUENCE: u64 = 0x5e9;
const STREAM_SIGNATURE: u64 = 0x519;
const STREAM_EMISSION: u64 = 0xe41;

/// Normal distribution given by mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dist {
    pub mean: f64,
    #[serde(default)]
    pub std: f64,
}

impl Dist {
    pub const fn new(mean: f64, std: f64) -> Self {
        Self { mean, std }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.std == 0.0 {
            return self.mean;
        }
        Normal::new(self.mean, self.std)
            .expect("validated std")
            .sample(rng)
    }

    fn validate(&self, field: &str) -> Result<()> {
        if !self.mean.is_finite() || !(self.std >= 0.0 && self.std.is_finite()) {
            return Err(Error::config(field, "mean must be finite and std >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub name: String,
    /// Relative length weight; phase lengths are normalised to the drawn duration.
    pub weight: Dist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsageRule {
    /// Phase the segment starts in; `None` means anywhere in the procedure.
    #[serde(default)]
    pub phase: Option<String>,
    pub probability: f64,
    /// Segment length in frames.
    pub length: Dist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentSpec {
    pub name: String,
    /// Whether the instrument is an anticipation target. Always-on tools are
    /// simulated but excluded.
    #[serde(default = "default_true")]
    pub anticipate: bool,
    #[serde(default)]
    pub usage: Vec<UsageRule>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerRule {
    pub trigger: String,
    pub target: String,
    /// Delay from trigger onset to target onset, in frames.
    pub delay: f64,
    /// Integer jitter bound: the delay is shifted uniformly in `[-jitter, jitter]`.
    #[serde(default)]
    pub jitter: f64,
    pub probability: f64,
    /// Target segment length in frames.
    pub length: Dist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureKind {
    /// Instrument `k` lights dimension `k`, phase `p` lights dimension `K + p`.
    OneHot,
    /// Standard-normal signature vectors drawn from `signature_seed`.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub dim: usize,
    #[serde(default)]
    pub noise_std: f64,
    pub signatures: SignatureKind,
    #[serde(default)]
    pub signature_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_fps")]
    pub fps: f64,
    /// Procedure length in frames.
    pub duration: Dist,
    #[serde(default)]
    pub phases: Vec<PhaseSpec>,
    pub instruments: Vec<InstrumentSpec>,
    #[serde(default)]
    pub triggers: Vec<TriggerRule>,
    pub features: FeatureSpec,
}

fn default_fps() -> f64 {
    1.0
}

fn check_probability(p: f64, field: &str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::config(field, format!("probability {p} not in [0, 1]")))
    }
}

impl SimConfig {
    pub fn num_instruments(&self) -> usize {
        self.instruments.len()
    }

    pub fn num_phases(&self) -> usize {
        self.phases.len()
    }

    pub fn instrument_names(&self) -> Vec<String> {
        self.instruments.iter().map(|i| i.name.clone()).collect()
    }

    /// Names of instruments flagged as anticipation targets.
    pub fn target_names(&self) -> Vec<String> {
        self.instruments
            .iter()
            .filter(|i| i.anticipate)
            .map(|i| i.name.clone())
            .collect()
    }

    fn instrument(&self, name: &str, field: &str) -> Result<usize> {
        self.instruments
            .iter()
            .position(|i| i.name == name)
            .ok_or_else(|| Error::config(field, format!("unknown instrument `{name}`")))
    }

    fn phase(&self, name: &str, field: &str) -> Result<usize> {
        self.phases
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| Error::config(field, format!("unknown phase `{name}`")))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::config("fps", "must be positive"));
        }
        self.duration.validate("duration")?;
        if self.duration.mean <= 0.0 {
            return Err(Error::config("duration.mean", "must be positive"));
        }
        if self.instruments.is_empty() {
            return Err(Error::config("instruments", "at least one instrument required"));
        }
        for (i, a) in self.instruments.iter().enumerate() {
            if self.instruments[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::config("instruments", format!("duplicate name `{}`", a.name)));
            }
        }
        for (i, p) in self.phases.iter().enumerate() {
            p.weight.validate(&format!("phases[{i}].weight"))?;
            if p.weight.mean <= 0.0 {
                return Err(Error::config(format!("phases[{i}].weight.mean"), "must be positive"));
            }
        }
        for inst in &self.instruments {
            for (j, rule) in inst.usage.iter().enumerate() {
                let field = format!("instruments.{}.usage[{j}]", inst.name);
                check_probability(rule.probability, &format!("{field}.probability"))?;
                rule.length.validate(&format!("{field}.length"))?;
                if let Some(phase) = &rule.phase {
                    self.phase(phase, &format!("{field}.phase"))?;
                }
            }
        }
        for (j, rule) in self.triggers.iter().enumerate() {
            let field = format!("triggers[{j}]");
            self.instrument(&rule.trigger, &format!("{field}.trigger"))?;
            self.instrument(&rule.target, &format!("{field}.target"))?;
            if rule.trigger == rule.target {
                return Err(Error::config(&field, "trigger and target must differ"));
            }
            check_probability(rule.probability, &format!("{field}.probability"))?;
            if !(rule.delay >= 0.0 && rule.delay.is_finite()) {
                return Err(Error::config(format!("{field}.delay"), "must be >= 0"));
            }
            if !(rule.jitter >= 0.0 && rule.jitter.is_finite()) {
                return Err(Error::config(format!("{field}.jitter"), "must be >= 0"));
            }
            rule.length.validate(&format!("{field}.length"))?;
        }
        let f = &self.features;
        if f.dim == 0 {
            return Err(Error::config("features.dim", "must be >= 1"));
        }
        if !(f.noise_std >= 0.0 && f.noise_std.is_finite()) {
            return Err(Error::config("features.noise_std", "must be >= 0"));
        }
        if f.signatures == SignatureKind::OneHot && f.dim < self.num_instruments() + self.num_phases() {
            return Err(Error::config(
                "features.dim",
                format!(
                    "one-hot signatures need dim >= K + P = {}",
                    self.num_instruments() + self.num_phases()
                ),
            ));
        }
        Ok(())
    }

    /// Instrument signatures (K rows) followed by phase signatures (P rows).
    pub fn signatures(&self) -> Vec<Vec<f64>> {
        let k = self.num_instruments();
        let p = self.num_phases();
        let dim = self.features.dim;
        match self.features.signatures {
            SignatureKind::OneHot => (0..k + p)
                .map(|i| {
                    let mut v = vec![0.0; dim];
                    v[i] = 1.0;
                    v
                })
                .collect(),
            SignatureKind::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    self.features.signature_seed,
                    STREAM_SIGNATURE,
                    0,
                ));
                let normal = Normal::new(0.0, 1.0).unwrap();
                (0..k + p)
                    .map(|_| (0..dim).map(|_| normal.sample(&mut rng)).collect())
                    .collect()
            }
        }
    }
}

/// Generates `n` procedures reproducibly from `(config, seed)`.
pub fn generate_dataset(config: &SimConfig, n: usize, seed: u64) -> Result<Vec<ProcedureSequence>> {
    generate_dataset_with(config, n, seed, Exec::default())
}

pub fn generate_dataset_with(
    config: &SimConfig,
    n: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<ProcedureSequence>> {
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size n must be >= 1".into()));
    }
    config.validate()?;
    let signatures = config.signatures();
    exec.try_map(n, |i| {
        generate_one(config, &signatures, &format!("sim_{i:04}"), derive_seed(seed, STREAM_SEQUENCE, i as u64))
    })
}

fn generate_one(
    config: &SimConfig,
    signatures: &[Vec<f64>],
    id: &str,
    seed: u64,
) -> Result<ProcedureSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = config.num_instruments();
    let p = config.num_phases();
    let n = (config.duration.sample(&mut rng).round() as i64).max(p.max(1) as i64) as usize;

    // phase boundaries: cumulative weights scaled to n, each phase >= 1 frame
    let mut phase_ranges = Vec::with_capacity(p);
    if p > 0 {
        let weights: Vec<f64> = config
            .phases
            .iter()
            .map(|ph| ph.weight.sample(&mut rng).max(1e-3))
            .collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut start = 0usize;
        for (j, w) in weights.iter().enumerate() {
            acc += w;
            let remaining = p - j - 1;
            let end = if remaining == 0 {
                n
            } else {
                ((acc / total * n as f64).round() as usize).clamp(start + 1, n - remaining)
            };
            phase_ranges.push((start, end));
            start = end;
        }
    }
    let mut phases = vec![0usize; n];
    for (j, &(s, e)) in phase_ranges.iter().enumerate() {
        phases[s..e].iter_mut().for_each(|x| *x = j);
    }

    let mut presence = vec![false; n * k];
    let mark = |presence: &mut [bool], inst: usize, start: usize, len: usize| {
        for t in start..(start + len).min(n) {
            presence[t * k + inst] = true;
        }
    };

    for (inst, spec) in config.instruments.iter().enumerate() {
        for rule in &spec.usage {
            let fires = rng.gen_bool(rule.probability);
            let len = (rule.length.sample(&mut rng).round() as i64).max(1) as usize;
            let (lo, hi) = match &rule.phase {
                Some(name) => phase_ranges[config.phase(name, "usage.phase")?],
                None => (0, n),
            };
            let start = rng.gen_range(lo..hi);
            if fires {
                mark(&mut presence, inst, start, len);
            }
        }
    }

    for rule in &config.triggers {
        let src = config.instrument(&rule.trigger, "trigger")?;
        let dst = config.instrument(&rule.target, "target")?;
        let onsets = onsets(&presence, k, src);
        for onset in onsets {
            let fires = rng.gen_bool(rule.probability);
            let jitter = rule.jitter.floor() as i64;
            let shift = if jitter > 0 { rng.gen_range(-jitter..=jitter) } else { 0 };
            let len = (rule.length.sample(&mut rng).round() as i64).max(1) as usize;
            let delay = (rule.delay.round() as i64 + shift).max(0) as usize;
            let at = onset + delay;
            // onsets past the end are dropped
            if fires && at < n {
                mark(&mut presence, dst, at, len);
            }
        }
    }

    let seq = ProcedureSequence::new(id, config.fps, config.instrument_names(), presence)?;
    let seq = if p > 0 { seq.with_phases(phases, p)? } else { seq };
    let features = emit_features(config, signatures, &seq, derive_seed(seed, STREAM_EMISSION, 0));
    seq.with_features(features)
}

/// Frames where the instrument switches from absent to present.
pub fn onsets(presence: &[bool], k: usize, inst: usize) -> Vec<usize> {
    let n = presence.len() / k;
    (0..n)
        .filter(|&t| presence[t * k + inst] && (t == 0 || !presence[(t - 1) * k + inst]))
        .collect()
}

/// Emits `Σ present instrument signatures + phase signature + noise` per frame.
pub(crate) fn emit_features(
    config: &SimConfig,
    signatures: &[Vec<f64>],
    seq: &ProcedureSequence,
    seed: u64,
) -> FeatureMatrix {
    let dim = config.features.dim;
    let k = config.num_instruments();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (config.features.noise_std > 0.0)
        .then(|| Normal::new(0.0, config.features.noise_std).unwrap());
    let mut data = Vec::with_capacity(seq.len() * dim);
    for t in 0..seq.len() {
        let mut row = vec![0.0; dim];
        for (inst, sig) in signatures.iter().take(k.min(seq.num_instruments())).enumerate() {
            if seq.present(t, inst) {
                row.iter_mut().zip(sig).for_each(|(r, s)| *r += s);
            }
        }
        if let Some(phases) = seq.phases() {
            if let Some(sig) = signatures.get(k + phases[t]) {
                row.iter_mut().zip(sig).for_each(|(r, s)| *r += s);
            }
        }
        if let Some(noise) = &noise {
            row.iter_mut().for_each(|r| *r += noise.sample(&mut rng));
        }
        data.extend(row);
    }
    FeatureMatrix::new(dim, data).expect("dim >= 1 validated")
}

/// Emission for an existing sequence whose instruments match `config`.
pub fn emit_for_sequence(config: &SimConfig, seq: &ProcedureSequence, seed: u64) -> Result<FeatureMatrix> {
    config.validate()?;
    if seq.instruments() != config.instrument_names().as_slice() {
        return Err(Error::InvalidArgument(format!(
            "sequence {} instruments do not match the simulator config",
            seq.id()
        )));
    }
    Ok(emit_features(config, &config.signatures(), seq, derive_seed(seed, STREAM_EMISSION, 0)))
}

fn seg(mean: f64, std: f64) -> Dist {
    Dist::new(mean, std)
}

fn phase(name: &str, weight: f64) -> PhaseSpec {
    PhaseSpec {
        name: name.into(),
        weight: seg(weight, weight * 0.25),
    }
}

fn usage(phase: Option<&str>, probability: f64, length: Dist) -> UsageRule {
    UsageRule {
        phase: phase.map(Into::into),
        probability,
        length,
    }
}

impl SimConfig {
    /// A cholecystectomy-like workflow: seven instruments, the first two
    /// always on and excluded from targets, and a clipper → scissors trigger.
    pub fn cholec_like() -> Self {
        let phases = vec![
            phase("preparation", 1.0),
            phase("calot_dissection", 4.0),
            phase("clipping_cutting", 1.0),
            phase("gallbladder_dissection", 3.0),
            phase("packaging", 0.6),
            phase("cleaning", 1.0),
            phase("retraction", 0.6),
        ];
        let inst = |name: &str, anticipate, usage| InstrumentSpec {
            name: name.into(),
            anticipate,
            usage,
        };
        let instruments = vec![
            inst("grasper", false, vec![usage(None, 1.0, seg(3000.0, 0.0))]),
            inst("hook", false, vec![usage(Some("calot_dissection"), 1.0, seg(600.0, 100.0))]),
            inst(
                "bipolar",
                true,
                vec![
                    usage(Some("calot_dissection"), 0.4, seg(40.0, 15.0)),
                    usage(Some("gallbladder_dissection"), 0.5, seg(40.0, 15.0)),
                    usage(Some("cleaning"), 0.6, seg(50.0, 15.0)),
                ],
            ),
            inst("scissors", true, vec![usage(Some("gallbladder_dissection"), 0.1, seg(15.0, 5.0))]),
            inst("clipper", true, vec![usage(Some("clipping_cutting"), 1.0, seg(45.0, 10.0))]),
            inst(
                "irrigator",
                true,
                vec![
                    usage(Some("gallbladder_dissection"), 0.4, seg(40.0, 15.0)),
                    usage(Some("cleaning"), 0.8, seg(60.0, 20.0)),
                ],
            ),
            inst("specimen_bag", true, vec![usage(Some("packaging"), 1.0, seg(80.0, 20.0))]),
        ];
        SimConfig {
            fps: 1.0,
            duration: seg(2000.0, 500.0),
            phases,
            instruments,
            triggers: vec![TriggerRule {
                trigger: "clipper".into(),
                target: "scissors".into(),
                delay: 60.0,
                jitter: 10.0,
                probability: 0.9,
                length: seg(20.0, 5.0),
            }],
            features: FeatureSpec {
                dim: 16,
                noise_std: 0.3,
                signatures: SignatureKind::OneHot,
                signature_seed: 0,
            },
        }
    }

    /// Three-instrument workflow where `A` triggers `B` after `delay` frames
    /// with the given probability, plus an unrelated distractor `C`. `A`
    /// stays in use for most of the delay. With probability `sporadic`, `B`
    /// is also used once during `work`, independent of `A`.
    pub fn trigger_demo(probability: f64, delay: f64, sporadic: f64) -> Self {
        let phases = vec![
            phase("setup", 1.0),
            phase("work", 2.0),
            phase("trigger_window", 1.0),
            phase("finish", 1.0),
        ];
        let instruments = vec![
            InstrumentSpec {
                name: "A".into(),
                anticipate: true,
                usage: vec![usage(Some("trigger_window"), 1.0, seg((0.9 * delay).max(1.0), 3.0))],
            },
            InstrumentSpec {
                name: "B".into(),
                anticipate: true,
                usage: if sporadic > 0.0 {
                    vec![usage(Some("work"), sporadic, seg(20.0, 3.0))]
                } else {
                    vec![]
                },
            },
            InstrumentSpec {
                name: "C".into(),
                anticipate: true,
                usage: vec![
                    usage(Some("work"), 0.5, seg(30.0, 10.0)),
                    usage(Some("finish"), 0.5, seg(30.0, 10.0)),
                ],
            },
        ];
        SimConfig {
            fps: 1.0,
            duration: seg(900.0, 200.0),
            phases,
            instruments,
            triggers: vec![TriggerRule {
                trigger: "A".into(),
                target: "B".into(),
                delay,
                jitter: 0.0,
                probability,
                length: seg(20.0, 3.0),
            }],
            features: FeatureSpec {
                dim: 8,
                noise_std: 0.2,
                signatures: SignatureKind::OneHot,
                signature_seed: 0,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        SimConfig::cholec_like().validate().unwrap();
        SimConfig::trigger_demo(0.8, 60.0, 0.0).validate().unwrap();
    }

    #[test]
    fn rejects_bad_config_with_field() {
        let mut c = SimConfig::trigger_demo(1.0, 60.0, 0.0);
        c.triggers[0].probability = 1.5;
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "triggers[0].probability"),
            other => panic!("{other:?}"),
        }
        let mut c = SimConfig::trigger_demo(1.0, 60.0, 0.0);
        c.triggers[0].delay = -1.0;
        assert!(c.validate().is_err());
        let mut c = SimConfig::trigger_demo(1.0, 60.0, 0.0);
        c.duration.mean = 0.0;
        assert!(c.validate().is_err());
        let mut c = SimConfig::trigger_demo(1.0, 60.0, 0.0);
        c.features.dim = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_sequences_rejected() {
        assert!(generate_dataset(&SimConfig::trigger_demo(1.0, 60.0, 0.0), 0, 1).is_err());
    }

    #[test]
    fn deterministic_trigger_places_target_at_delay() {
        let cfg = SimConfig::trigger_demo(1.0, 60.0, 0.0);
        let data = generate_dataset(&cfg, 1, 11).unwrap();
        let s = &data[0];
        let a = onsets(s.presence(), 3, 0);
        let b = onsets(s.presence(), 3, 1);
        assert_eq!(b[0], a[0] + 60);
    }

    #[test]
    fn phases_cover_sequence_in_order() {
        let cfg = SimConfig::cholec_like();
        for s in generate_dataset(&cfg, 5, 3).unwrap() {
            let ph = s.phases().unwrap();
            assert_eq!(ph[0], 0);
            assert_eq!(*ph.last().unwrap(), cfg.num_phases() - 1);
            assert!(ph.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
        }
    }
}
