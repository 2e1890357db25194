//! Annotation and feature file formats.
//!
//! * `cholec80_tool_tsv`: tab-separated, header `Frame` plus one column per
//!   tool, rows at source-fps intervals, values `0`/`1`.
//! * `generic_csv`: header `frame,<inst_1>,...,<inst_K>[,phase]`, values
//!   `0`/`1`, optional integer phase column.
//! * Feature files: headerless CSV with one row of `F` reals per frame, or raw
//!   little-endian `f32` rows with a sidecar `<file>.hdr` holding `F=<dim> n=<frames>`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sequence::{FeatureMatrix, ProcedureSequence};
use super::sim::{emit_for_sequence, SimConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationFormat {
    Cholec80ToolTsv,
    GenericCsv,
}

impl std::str::FromStr for AnnotationFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cholec80_tool_tsv" => Ok(Self::Cholec80ToolTsv),
            "generic_csv" => Ok(Self::GenericCsv),
            other => Err(Error::InvalidArgument(format!("unknown annotation format `{other}`"))),
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn stem(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.split('.').next().unwrap_or_default().to_string()
}

/// Loads one annotated procedure at 1 fps.
pub fn load_annotations(path: impl AsRef<Path>, format: AnnotationFormat) -> Result<ProcedureSequence> {
    let path = path.as_ref();
    let text = read_text(path)?;
    parse_annotations(&text, format, &stem(path), path)
}

/// Parses annotation text. `origin` is only used for error messages.
pub fn parse_annotations(
    text: &str,
    format: AnnotationFormat,
    id: &str,
    origin: &Path,
) -> Result<ProcedureSequence> {
    let sep = match format {
        AnnotationFormat::Cholec80ToolTsv => '\t',
        AnnotationFormat::GenericCsv => ',',
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i as u64 + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());

    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::parse(origin, 1, "missing header"))?;
    let cols: Vec<&str> = header.split(sep).map(str::trim).collect();
    let frame_col = match format {
        AnnotationFormat::Cholec80ToolTsv => "Frame",
        AnnotationFormat::GenericCsv => "frame",
    };
    if cols.first() != Some(&frame_col) {
        return Err(Error::parse(
            origin,
            hline,
            format!("header must start with `{frame_col}`"),
        ));
    }
    let has_phase = format == AnnotationFormat::GenericCsv && cols.last() == Some(&"phase");
    let inst_end = if has_phase { cols.len() - 1 } else { cols.len() };
    let instruments: Vec<String> = cols[1..inst_end].iter().map(|s| s.to_string()).collect();
    if instruments.is_empty() {
        return Err(Error::parse(origin, hline, "no instrument columns"));
    }
    if let Some(empty) = instruments.iter().position(String::is_empty) {
        return Err(Error::parse(origin, hline, format!("empty column name at position {}", empty + 1)));
    }

    let mut presence = Vec::new();
    let mut phases = Vec::new();
    let mut last_frame: Option<u64> = None;
    for (line, row) in lines {
        let fields: Vec<&str> = row.split(sep).map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::parse(
                origin,
                line,
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        let frame: u64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(origin, line, format!("invalid frame index `{}`", fields[0])))?;
        if let Some(prev) = last_frame {
            if frame <= prev {
                return Err(Error::parse(
                    origin,
                    line,
                    format!("non-monotonic frame index {frame} after {prev}"),
                ));
            }
        }
        last_frame = Some(frame);
        for (j, v) in fields[1..inst_end].iter().enumerate() {
            presence.push(match *v {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::parse(
                        origin,
                        line,
                        format!("non-binary presence value `{other}` for `{}`", instruments[j]),
                    ))
                }
            });
        }
        if has_phase {
            let p = fields[inst_end];
            phases.push(
                p.parse::<usize>()
                    .map_err(|_| Error::parse(origin, line, format!("invalid phase `{p}`")))?,
            );
        }
    }
    if presence.is_empty() {
        return Err(Error::parse(origin, hline, "no data rows"));
    }
    let seq = ProcedureSequence::new(id, 1.0, instruments, presence)?;
    if has_phase {
        let count = phases.iter().max().map_or(1, |m| m + 1);
        seq.with_phases(phases, count)
    } else {
        Ok(seq)
    }
}

/// Serialises to `generic_csv`, including the phase column when present.
pub fn to_generic_csv(seq: &ProcedureSequence) -> String {
    let mut out = String::from("frame");
    for name in seq.instruments() {
        out.push(',');
        out.push_str(name);
    }
    let phases = seq.phases();
    if phases.is_some() {
        out.push_str(",phase");
    }
    out.push('\n');
    for t in 0..seq.len() {
        out.push_str(&t.to_string());
        for k in 0..seq.num_instruments() {
            out.push_str(if seq.present(t, k) { ",1" } else { ",0" });
        }
        if let Some(ph) = phases {
            out.push(',');
            out.push_str(&ph[t].to_string());
        }
        out.push('\n');
    }
    out
}

/// Serialises to `cholec80_tool_tsv` with rows every `stride` source frames.
pub fn to_cholec80_tsv(seq: &ProcedureSequence, stride: u64) -> String {
    let mut out = String::from("Frame");
    for name in seq.instruments() {
        out.push('\t');
        out.push_str(name);
    }
    out.push('\n');
    for t in 0..seq.len() {
        out.push_str(&(t as u64 * stride).to_string());
        for k in 0..seq.num_instruments() {
            out.push_str(if seq.present(t, k) { "\t1" } else { "\t0" });
        }
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut rows = Vec::new();
    let mut dim = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(path, i as u64 + 1, format!("invalid real `{v}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Error::parse(
                    path,
                    i as u64 + 1,
                    format!("ragged dimensions: {} values, expected {d}", row.len()),
                ))
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(path, 1, "empty feature file"));
    }
    FeatureMatrix::from_rows(&rows)
}

pub fn feature_csv_string(features: &FeatureMatrix) -> String {
    let mut out = String::new();
    for t in 0..features.rows() {
        let row: Vec<String> = features.row(t).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_feature_csv(path: &Path, features: &FeatureMatrix) -> Result<()> {
    write_text(path, &feature_csv_string(features))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

/// Writes raw little-endian `f32` rows plus the sidecar header.
pub fn write_feature_f32(path: &Path, features: &FeatureMatrix) -> Result<()> {
    let mut bytes = Vec::with_capacity(features.as_slice().len() * 4);
    for &v in features.as_slice() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    write_text(
        &sidecar_path(path),
        &format!("F={} n={}\n", features.dim(), features.rows()),
    )
}

pub fn read_feature_f32(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let hdr_path = sidecar_path(path);
    let header = read_text(&hdr_path)?;
    let mut dim = None;
    let mut frames = None;
    for tok in header.split_whitespace() {
        match tok.split_once('=') {
            Some(("F", v)) => dim = v.parse::<usize>().ok(),
            Some(("n", v)) => frames = v.parse::<usize>().ok(),
            _ => return Err(Error::parse(&hdr_path, 1, format!("unexpected token `{tok}`"))),
        }
    }
    let (dim, frames) = match (dim, frames) {
        (Some(d), Some(n)) if d > 0 => (d, n),
        _ => return Err(Error::parse(&hdr_path, 1, "header must be `F=<dim> n=<frames>`")),
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != dim * frames * 4 {
        return Err(Error::Dimension(format!(
            "{}: {} bytes, header declares {frames}x{dim} f32 values",
            path.display(),
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    FeatureMatrix::new(dim, data)
}

/// Reads a feature file, choosing the raw `f32` reader for `.f32`/`.bin`.
pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("f32") | Some("bin") => read_feature_f32(path),
        _ => read_feature_csv(path),
    }
}

pub enum FeatureSource<'a> {
    File(&'a Path),
    Emission { config: &'a SimConfig, seed: u64 },
}

/// Returns `seq` with features set; presence and phases are untouched.
pub fn attach_features(seq: ProcedureSequence, source: FeatureSource<'_>) -> Result<ProcedureSequence> {
    let features = match source {
        FeatureSource::File(path) => read_features(path)?,
        FeatureSource::Emission { config, seed } => emit_for_sequence(config, &seq, seed)?,
    };
    seq.with_features(features)
}
