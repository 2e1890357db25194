//! On-disk layout of a run directory.
//!
//! ```text
//! <out>/data/{train,test}/<id>.csv       generic_csv annotations
//! <out>/data/{train,test}/<id>.f32       features (+ .hdr sidecar)
//! <out>/data/meta.json                   target instruments, phase count
//! <out>/baselines/<mode>_h<h>.json
//! <out>/models/h<h>.ckpt, h<h>_log.csv
//! <out>/predictions/h<h>/<method>/<id>.csv
//! <out>/reports/...
//! <out>/manifest.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anticipation::metrics::Predictions;
use anticipation::workflow::{
    load_annotations, read_features, to_generic_csv, write_feature_f32, write_text, AnnotationFormat,
    ProcedureSequence,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::Recorder;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DataMeta {
    pub targets: Vec<String>,
    pub phases: Option<usize>,
}

pub fn horizon_tag(h: f64) -> String {
    format!("h{h}")
}

/// A loaded split. `videos` hold all annotated instruments; `targets` names
/// the anticipated subset in order.
pub struct Dataset {
    pub videos: Vec<ProcedureSequence>,
    pub targets: Vec<String>,
    pub phases: Option<usize>,
}

impl Dataset {
    /// Videos restricted to the target instruments.
    pub fn target_videos(&self) -> CliResult<Vec<ProcedureSequence>> {
        self.videos
            .iter()
            .map(|v| v.select_by_name(&self.targets).map_err(CliError::from))
            .collect()
    }
}

pub fn data_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("data")
}

pub fn write_split(rec: &mut Recorder, cfg: &RunConfig, split: Split, videos: &[ProcedureSequence]) -> CliResult<()> {
    let dir = data_dir(cfg).join(split.name());
    for v in videos {
        let csv = dir.join(format!("{}.csv", v.id()));
        rec.guard(&csv)?;
        write_text(&csv, &to_generic_csv(v))?;
        rec.record(&csv)?;
        if let Some(f) = v.features() {
            let bin = dir.join(format!("{}.f32", v.id()));
            rec.guard(&bin)?;
            write_feature_f32(&bin, f)?;
            rec.record(&bin)?;
            rec.record(&anticipation::workflow::sidecar_path(&bin))?;
        }
    }
    Ok(())
}

pub fn write_meta(rec: &mut Recorder, cfg: &RunConfig, meta: &DataMeta) -> CliResult<()> {
    let path = data_dir(cfg).join("meta.json");
    rec.guard(&path)?;
    write_text(&path, &serde_json::to_string_pretty(meta).expect("meta serializes"))?;
    rec.record(&path)
}

fn sorted_entries(dir: &Path, ext: &str) -> CliResult<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| CliError::input(format!("cannot list {}: {e}", dir.display())))?;
    let mut out: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn load_meta(cfg: &RunConfig) -> Option<DataMeta> {
    let text = fs::read_to_string(data_dir(cfg).join("meta.json")).ok()?;
    serde_json::from_str(&text).ok()
}

fn locate(cfg: &RunConfig, split: Split) -> (PathBuf, bool) {
    let external = match split {
        Split::Train => &cfg.data.train,
        Split::Test => &cfg.data.test,
    };
    match external {
        Some(p) => (p.clone(), true),
        None => (data_dir(cfg).join(split.name()), false),
    }
}

fn feature_file(dir: &Path, id: &str) -> Option<PathBuf> {
    ["f32", "bin", "csv"]
        .iter()
        .map(|ext| dir.join(format!("{id}.{ext}")))
        .find(|p| p.exists() && !(p.extension().is_some_and(|e| e == "csv") && looks_like_annotations(p)))
}

fn looks_like_annotations(p: &Path) -> bool {
    fs::read_to_string(p)
        .map(|t| t.lines().next().is_some_and(|l| l.starts_with("frame") || l.starts_with("Frame")))
        .unwrap_or(false)
}

/// Loads the annotated videos of a split in file-name order, attaching
/// features where a matching file exists.
pub fn load_split(cfg: &RunConfig, split: Split, need_features: bool) -> CliResult<Dataset> {
    let (dir, external) = locate(cfg, split);
    if !dir.is_dir() {
        return Err(CliError::input(format!(
            "{} split not found at {} (run `simulate` or set data.{})",
            split.name(),
            dir.display(),
            split.name()
        )));
    }
    let format = cfg.data.format()?;
    let ext = match format {
        AnnotationFormat::GenericCsv => "csv",
        AnnotationFormat::Cholec80ToolTsv => "txt",
    };
    let feature_dir = cfg.data.features.clone().filter(|_| external).unwrap_or_else(|| dir.clone());
    let mut videos = Vec::new();
    for path in sorted_entries(&dir, ext)? {
        let id = stem(&path);
        if format == AnnotationFormat::GenericCsv && !looks_like_annotations(&path) {
            continue;
        }
        let mut seq = load_annotations(&path, format)?;
        if let Some(f) = feature_file(&feature_dir, &id) {
            seq = seq.with_features(read_features(&f)?)?;
        } else if need_features {
            return Err(CliError::input(format!("video {id}: no feature file in {}", feature_dir.display())));
        }
        videos.push(seq);
    }
    if videos.is_empty() {
        return Err(CliError::empty(format!("no {} annotation files in {}", split.name(), dir.display())));
    }
    let meta = load_meta(cfg).filter(|_| !external);
    let targets = match (&cfg.data.instruments, &meta) {
        (Some(t), _) => t.clone(),
        (None, Some(m)) => m.targets.clone(),
        (None, None) => videos[0].instruments().to_vec(),
    };
    let phases = meta
        .and_then(|m| m.phases)
        .or_else(|| videos.iter().filter_map(|v| v.phase_count()).max());
    if let Some(p) = phases {
        videos = videos
            .into_iter()
            .map(|v| match v.phases().map(<[usize]>::to_vec) {
                Some(ph) => v.with_phases(ph, p),
                None => Ok(v),
            })
            .collect::<Result<_, _>>()?;
    }
    Ok(Dataset {
        videos,
        targets,
        phases,
    })
}

/// Ids of the test split that only have feature files (no annotations).
pub fn feature_only_ids(cfg: &RunConfig) -> CliResult<Vec<(String, usize)>> {
    let (dir, external) = locate(cfg, Split::Test);
    let feature_dir = cfg.data.features.clone().filter(|_| external).unwrap_or_else(|| dir.clone());
    if !feature_dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for p in sorted_entries(&feature_dir, "f32")? {
        let id = stem(&p);
        let annotated = dir.join(format!("{id}.csv")).exists() || dir.join(format!("{id}.txt")).exists();
        if !annotated {
            out.push((id, read_features(&p)?.rows()));
        }
    }
    Ok(out)
}

pub fn predictions_dir(cfg: &RunConfig, h: f64, method: &str) -> PathBuf {
    cfg.out.join("predictions").join(horizon_tag(h)).join(method)
}

pub fn predictions_csv(names: &[String], p: &Predictions) -> String {
    let mut out = String::from("frame");
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for t in 0..p.len() {
        out.push_str(&t.to_string());
        for k in 0..p.num_instruments() {
            out.push(',');
            out.push_str(&p.get(t, k).to_string());
        }
        out.push('\n');
    }
    out
}

pub fn read_predictions_csv(path: &Path, names: &[String]) -> CliResult<Predictions> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    if header.first() != Some(&"frame") || header[1..] != names.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        return Err(CliError::input(format!("{}: header does not match instruments {names:?}", path.display())));
    }
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        for v in line.split(',').skip(1) {
            values.push(
                v.parse::<f64>()
                    .map_err(|_| CliError::input(format!("{}:{}: invalid value `{v}`", path.display(), i + 2)))?,
            );
        }
    }
    Ok(Predictions::new(names.len(), values)?)
}

/// Prediction files of one method keyed by video id.
pub fn list_predictions(dir: &Path, suffix: &str) -> CliResult<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for p in sorted_entries(dir, "csv")? {
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        if let Some(id) = name.strip_suffix(suffix) {
            out.insert(id.to_string(), p);
        }
    }
    Ok(out)
}
