//! The `anticipate` pipeline: simulate → baseline → train → predict →
//! evaluate → analyze, each reading and writing one run directory.

pub mod config;
pub mod error;
pub mod manifest;
pub mod plot;
pub mod store;

use std::collections::BTreeMap;
use std::path::PathBuf;

use anticipation::analysis::{analyze as run_analysis, anticipating_points};
use anticipation::baselines::{fit_baseline_with, predict_baseline, BaselineMode};
use anticipation::inference::{mc_predict_with, McOptions, PredictiveSummary};
use anticipation::labels::{compute_targets, compute_targets_batch, AnticipationTargets};
use anticipation::metrics::{evaluate as evaluate_metrics, MetricsTable, Predictions};
use anticipation::model::{train, NetworkParams, TrainingVideo};
use anticipation::par::derive_seed;
use anticipation::workflow::{generate_dataset_with, read_features, FeatureMatrix};
use anticipation::Exec;
use clap::{Parser, Subcommand, ValueEnum};

use config::{Overrides, RunConfig};
use error::{CliError, CliResult};
use manifest::Recorder;
use store::{horizon_tag, load_split, predictions_csv, predictions_dir, DataMeta, Split};

pub use error::ExitCode;

pub const MODEL_METHOD: &str = "bayesian_lstm";
const SUMMARY_SUFFIX: &str = ".summary.csv";
const STREAM_TRAIN_SET: u64 = 0x7a;
const STREAM_TEST_SET: u64 = 0x7e;
const STREAM_PREDICT: u64 = 0x9d;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Mean,
    Oracle,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<BaselineMode> {
        match self {
            ModeArg::Mean => vec![BaselineMode::Mean],
            ModeArg::Oracle => vec![BaselineMode::Oracle],
            ModeArg::Both => vec![BaselineMode::Mean, BaselineMode::Oracle],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate train and test procedures with features.
    Simulate,
    /// Fit histogram baselines on train and predict test.
    Baseline,
    /// Train one network per horizon.
    Train,
    /// Monte-Carlo dropout predictions for the test split.
    Predict,
    /// wMAE / pMAE per method and horizon.
    Evaluate,
    /// Uncertainty analyses of the network's test predictions.
    Analyze,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Baseline => "baseline",
            Command::Train => "train",
            Command::Predict => "predict",
            Command::Evaluate => "evaluate",
            Command::Analyze => "analyze",
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "anticipate", version, about = "Anticipation of sparse instrument usage with uncertainty")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Horizon(s) in minutes, comma separated or repeated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub horizon: Vec<f64>,
    /// Run directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Baseline variant(s) to fit.
    #[arg(long, global = true, value_enum, default_value = "both")]
    pub mode: ModeArg,
    /// MC dropout sample count T.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Percentile grid for uncertainty filtering, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub percentiles: Vec<u32>,
    /// Allow replacing artifacts in an existing run directory.
    #[arg(long, global = true)]
    pub overwrite: bool,
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            horizons: (!self.horizon.is_empty()).then(|| self.horizon.clone()),
            out: self.out.clone(),
            samples: self.samples,
            percentiles: (!self.percentiles.is_empty()).then(|| self.percentiles.clone()),
        }
    }

    /// File config with flag overrides applied and validated.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&self.overrides());
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::Config as i32 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = cli.resolve()?;
    eprintln!("# {} with resolved config\n{}", cli.command.name(), cfg.to_toml());
    let mut rec = Recorder::new(&cfg.out, cli.overwrite);
    rec.check_config(&cfg)?;
    match cli.command {
        Command::Simulate => simulate(&cfg, &mut rec)?,
        Command::Baseline => baseline(&cfg, &mut rec, cli.mode)?,
        Command::Train => train_models(&cfg, &mut rec)?,
        Command::Predict => predict(&cfg, &mut rec)?,
        Command::Evaluate => evaluate(&cfg, &mut rec)?,
        Command::Analyze => analyze(&cfg, &mut rec)?,
    }
    rec.finish(cli.command.name(), &cfg)
}

fn exec(cfg: &RunConfig) -> Exec {
    if cfg.parallel {
        Exec::Parallel
    } else {
        Exec::Sequential
    }
}

fn simulate(cfg: &RunConfig, rec: &mut Recorder) -> CliResult<()> {
    let sim = cfg.sim.resolve();
    let train = generate_dataset_with(&sim, cfg.sim.train_videos, derive_seed(cfg.seed, STREAM_TRAIN_SET, 0), exec(cfg))?;
    let test = generate_dataset_with(&sim, cfg.sim.test_videos, derive_seed(cfg.seed, STREAM_TEST_SET, 0), exec(cfg))?;
    store::write_split(rec, cfg, Split::Train, &train)?;
    store::write_split(rec, cfg, Split::Test, &test)?;
    let meta = DataMeta {
        targets: sim.target_names(),
        phases: (sim.num_phases() > 0).then(|| sim.num_phases()),
    };
    store::write_meta(rec, cfg, &meta)?;
    eprintln!("simulated {} train and {} test procedures", train.len(), test.len());
    Ok(())
}

/// Test videos with annotations and, if available, feature-only ids with
/// their frame counts.
fn test_inputs(cfg: &RunConfig, need_features: bool) -> CliResult<(Option<store::Dataset>, Vec<(String, usize)>)> {
    let annotated = match load_split(cfg, Split::Test, need_features) {
        Ok(d) => Some(d),
        Err(e) if e.code == ExitCode::Empty => None,
        Err(e) => return Err(e),
    };
    let feature_only = store::feature_only_ids(cfg)?;
    if annotated.is_none() && feature_only.is_empty() {
        return Err(CliError::empty("test split has no videos"));
    }
    Ok((annotated, feature_only))
}

fn baseline(cfg: &RunConfig, rec: &mut Recorder, mode: ModeArg) -> CliResult<()> {
    let train = load_split(cfg, Split::Train, false)?;
    let names = train.targets.clone();
    let train_videos = train.target_videos()?;
    let (test, feature_only) = test_inputs(cfg, false)?;
    let test_videos = test.as_ref().map(|t| t.target_videos()).transpose()?.unwrap_or_default();
    for m in mode.modes() {
        if m == BaselineMode::Oracle && !feature_only.is_empty() {
            return Err(CliError::input(format!(
                "OracleHist needs each test video's true duration, but {} test video(s) have features only (e.g. {})",
                feature_only.len(),
                feature_only[0].0
            )));
        }
        for &h in &cfg.eval.horizons {
            let model = fit_baseline_with(&train_videos, h, cfg.eval.bins, m, exec(cfg))?;
            let path = cfg.out.join("baselines").join(format!("{}_{}.json", m.method_name(), horizon_tag(h)));
            rec.guard(&path)?;
            model.save(&path)?;
            rec.record(&path)?;
            let dir = predictions_dir(cfg, h, m.method_name());
            let lengths = test_videos
                .iter()
                .map(|v| (v.id().to_string(), v.len()))
                .chain(feature_only.iter().cloned());
            for (id, len) in lengths {
                let p = predict_baseline(&model, Some(len))?;
                rec.write(&dir.join(format!("{id}.csv")), &predictions_csv(&names, &p))?;
            }
        }
    }
    Ok(())
}

fn model_path(cfg: &RunConfig, h: f64) -> PathBuf {
    cfg.out.join("models").join(format!("{}.ckpt", horizon_tag(h)))
}

fn train_models(cfg: &RunConfig, rec: &mut Recorder) -> CliResult<()> {
    let data = load_split(cfg, Split::Train, true)?;
    let videos = data.target_videos()?;
    let input_dim = videos[0].features().expect("features required").dim();
    for &h in &cfg.eval.horizons {
        let targets = compute_targets_batch(&videos, h, exec(cfg))?;
        let tv = videos
            .iter()
            .zip(&targets)
            .map(|(v, t)| TrainingVideo::new(v, t))
            .collect::<Result<Vec<_>, _>>()?;
        let net = cfg.network(input_dim, data.targets.len(), data.phases, h);
        let (params, log) = train(&tv, &net)?;
        let path = model_path(cfg, h);
        rec.guard(&path)?;
        params.save(&path)?;
        rec.record(&path)?;
        rec.write(&cfg.out.join("models").join(format!("{}_log.csv", horizon_tag(h))), &log.to_csv())?;
        if let Some(last) = log.epochs.last() {
            eprintln!("h={h}: final epoch loss {:.6}", last.loss.total);
        }
    }
    Ok(())
}

fn predict(cfg: &RunConfig, rec: &mut Recorder) -> CliResult<()> {
    let (test, feature_only) = test_inputs(cfg, true)?;
    let test_dir = cfg.data.test.clone().unwrap_or_else(|| store::data_dir(cfg).join("test"));
    let feature_dir = cfg.data.features.clone().filter(|_| cfg.data.test.is_some()).unwrap_or(test_dir);
    let mut inputs: Vec<(String, FeatureMatrix)> = Vec::new();
    if let Some(t) = &test {
        for v in &t.videos {
            inputs.push((v.id().to_string(), v.features().expect("features required").clone()));
        }
    }
    for (id, _) in &feature_only {
        inputs.push((id.clone(), read_features(feature_dir.join(format!("{id}.f32")))?));
    }
    inputs.sort_by(|a, b| a.0.cmp(&b.0));
    for &h in &cfg.eval.horizons {
        let path = model_path(cfg, h);
        if !path.exists() {
            return Err(CliError::input(format!("no checkpoint at {} (run `train` first)", path.display())));
        }
        let params = NetworkParams::load(&path)?;
        let out = predictions_dir(cfg, h, MODEL_METHOD);
        for (i, (id, features)) in inputs.iter().enumerate() {
            let opts = McOptions {
                exec: exec(cfg),
                ..McOptions::new(cfg.eval.samples, derive_seed(cfg.seed, STREAM_PREDICT, i as u64))
            };
            let summary = mc_predict_with(&params, features, &opts)?;
            rec.write(&out.join(format!("{id}{SUMMARY_SUFFIX}")), &summary.to_csv())?;
            if cfg.eval.binary_summaries {
                let bin = out.join(format!("{id}.summary.bin"));
                rec.guard(&bin)?;
                summary.save_binary(&bin)?;
                rec.record(&bin)?;
            }
        }
    }
    Ok(())
}

fn predictions_for(
    cfg: &RunConfig,
    h: f64,
    method: &str,
    names: &[String],
    ids: &[String],
) -> CliResult<Option<Vec<Predictions>>> {
    let dir = predictions_dir(cfg, h, method);
    let suffix = if method == MODEL_METHOD { SUMMARY_SUFFIX } else { ".csv" };
    let files = store::list_predictions(&dir, suffix)?;
    if files.is_empty() {
        return Ok(None);
    }
    ids.iter()
        .map(|id| {
            let path = files
                .get(id)
                .ok_or_else(|| CliError::input(format!("{method} has no prediction for test video {id}")))?;
            if method == MODEL_METHOD {
                let s = PredictiveSummary::load_csv(path)?;
                if s.instruments != names.len() {
                    return Err(CliError::input(format!("{}: instrument count mismatch", path.display())));
                }
                Ok(s.regression_predictions())
            } else {
                store::read_predictions_csv(path, names)
            }
        })
        .collect::<CliResult<Vec<_>>>()
        .map(Some)
}

fn evaluate(cfg: &RunConfig, rec: &mut Recorder) -> CliResult<()> {
    let test = load_split(cfg, Split::Test, false)?;
    let names = test.targets.clone();
    let videos = test.target_videos()?;
    let ids: Vec<String> = videos.iter().map(|v| v.id().to_string()).collect();
    let methods = [BaselineMode::Mean.method_name(), BaselineMode::Oracle.method_name(), MODEL_METHOD];
    let mut table = MetricsTable::default();
    for &h in &cfg.eval.horizons {
        let targets = compute_targets_batch(&videos, h, exec(cfg))?;
        let mut per_method = String::from("method,");
        per_method.push_str(&anticipation::metrics::MetricsReport::csv_header());
        per_method.push('\n');
        for method in methods {
            let Some(preds) = predictions_for(cfg, h, method, &names, &ids)? else {
                continue;
            };
            let report = evaluate_metrics(&names, &preds, &targets)?;
            for line in report.to_csv().lines().skip(1) {
                per_method.push_str(&format!("{method},{line}\n"));
            }
            table.push(method, report);
        }
        if per_method.lines().count() > 1 {
            rec.write(&cfg.out.join("reports").join(format!("metrics_{}.csv", horizon_tag(h))), &per_method)?;
        }
    }
    if table.rows.is_empty() {
        return Err(CliError::empty("no predictions to evaluate (run `baseline` or `predict` first)"));
    }
    rec.write(&cfg.out.join("reports").join("metrics.csv"), &table.to_csv())?;
    rec.write(&cfg.out.join("reports").join("metrics.json"), &table.to_json()?)?;
    eprint!("{}", table.to_csv());
    Ok(())
}

fn analyze(cfg: &RunConfig, rec: &mut Recorder) -> CliResult<()> {
    let test = load_split(cfg, Split::Test, false)?;
    let names = test.targets.clone();
    let videos = test.target_videos()?;
    let fps = videos[0].fps();
    let acfg = cfg.analysis.resolve(fps);
    let ids: Vec<String> = videos.iter().map(|v| v.id().to_string()).collect();
    let mut any = false;
    for &h in &cfg.eval.horizons {
        let dir = predictions_dir(cfg, h, MODEL_METHOD);
        let files = store::list_predictions(&dir, SUMMARY_SUFFIX)?;
        if files.is_empty() {
            continue;
        }
        let summaries = ids
            .iter()
            .map(|id| {
                let p = files
                    .get(id)
                    .ok_or_else(|| CliError::input(format!("no summary for test video {id} at h={h}")))?;
                Ok(PredictiveSummary::load_csv(p)?)
            })
            .collect::<CliResult<Vec<_>>>()?;
        let targets: Vec<AnticipationTargets> = videos
            .iter()
            .map(|v| compute_targets(v, h))
            .collect::<Result<_, _>>()?;
        let report = run_analysis(
            &names,
            &summaries,
            &targets,
            |v, inst| videos[v].presence_track(inst),
            &acfg,
            exec(cfg),
        )?;
        let out = cfg.out.join("reports").join("analysis").join(horizon_tag(h));
        let files: BTreeMap<&str, String> = [
            ("pcc.csv", report.pcc_csv()),
            ("filtering.csv", report.filtering_csv()),
            ("tp_fp.csv", report.tp_fp_csv()),
            ("trigger.csv", report.trigger_csv()),
            ("trigger_frames.csv", report.trigger_frames_csv()),
        ]
        .into_iter()
        .collect();
        for (name, text) in files {
            rec.write(&out.join(name), &text)?;
        }
        rec.write(&out.join("report.json"), &serde_json::to_string_pretty(&report).expect("report serializes"))?;
        if cfg.analysis.plots {
            for (k, name) in names.iter().enumerate() {
                let pts = anticipating_points(&summaries, &targets, k, h)?;
                let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.variance, p.error)).collect();
                let svg = plot::scatter(
                    &format!("{name}, h = {h} min"),
                    "regression epistemic variance",
                    "absolute error (min)",
                    &xy,
                );
                rec.write(&out.join(format!("scatter_{name}.svg")), &svg)?;
            }
        }
        any = true;
    }
    if !any {
        return Err(CliError::empty("no network predictions to analyze (run `predict` first)"));
    }
    Ok(())
}
