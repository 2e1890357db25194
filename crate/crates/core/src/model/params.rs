//! Flat parameter registry and checkpoints.
//!
//! A checkpoint is a single file: one line of JSON header (config, config
//! hash, tensor names and shapes) terminated by `\n`, followed by every
//! parameter as a little-endian `f64`, in registry order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use crate::error::{Error, Result};

const CHECKPOINT_FORMAT: &str = "anticipation-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    #[serde(skip)]
    pub offset: usize,
}

impl TensorEntry {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dense {
    pub w: usize,
    pub b: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub entries: Vec<TensorEntry>,
    pub encoder: Vec<Dense>,
    pub lstm_input: Dense,
    pub lstm_hidden_w: usize,
    pub reg: Dense,
    pub cls: Dense,
    pub phase: Option<Dense>,
    pub total: usize,
}

struct LayoutBuilder {
    entries: Vec<TensorEntry>,
    offset: usize,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, rows: usize, cols: usize) -> usize {
        let o = self.offset;
        self.entries.push(TensorEntry { name, rows, cols, offset: o });
        self.offset += rows * cols;
        o
    }

    fn dense(&mut self, name: &str, rows: usize, cols: usize) -> Dense {
        Dense {
            w: self.push(format!("{name}.weight"), rows, cols),
            b: self.push(format!("{name}.bias"), rows, 1),
            rows,
            cols,
        }
    }
}

impl Layout {
    pub fn new(cfg: &NetworkConfig) -> Self {
        let mut b = LayoutBuilder { entries: Vec::new(), offset: 0 };
        let mut encoder = Vec::new();
        let mut in_dim = cfg.input_dim;
        for (l, &w) in cfg.encoder_widths.iter().enumerate() {
            encoder.push(b.dense(&format!("encoder.{l}"), w, in_dim));
            in_dim = w;
        }
        let gates = 4 * cfg.hidden;
        let wx = b.push("lstm.input_weight".into(), gates, in_dim);
        let wh = b.push("lstm.hidden_weight".into(), gates, cfg.hidden);
        let bias = b.push("lstm.bias".into(), gates, 1);
        let lstm_input = Dense { w: wx, b: bias, rows: gates, cols: in_dim };
        let reg = b.dense("head.regression", cfg.instruments, cfg.hidden);
        let cls = b.dense("head.classification", 3 * cfg.instruments, cfg.hidden);
        let phase = cfg.phases.map(|p| b.dense("head.phase", p, cfg.hidden));
        Layout {
            entries: b.entries,
            encoder,
            lstm_input,
            lstm_hidden_w: wh,
            reg,
            cls,
            phase,
            total: b.offset,
        }
    }

    /// Name of the tensor holding flat index `i`.
    pub fn name_of(&self, i: usize) -> &str {
        self.entries
            .iter()
            .find(|e| e.range().contains(&i))
            .map_or("?", |e| e.name.as_str())
    }
}

/// Network weights in a flat, indexable registry.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    config: NetworkConfig,
    pub(crate) layout: Layout,
    values: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        Ok(Self {
            config: config.clone(),
            values: vec![0.0; layout.total],
            layout,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn tensors(&self) -> &[TensorEntry] {
        &self.layout.entries
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| &self.values[e.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.entries.iter().find(|e| e.name == name)?.range();
        Some(&mut self.values[range])
    }

    pub fn param_name(&self, index: usize) -> &str {
        self.layout.name_of(index)
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            config_hash: self.config.hash(),
            config: self.config.clone(),
            tensors: self.layout.entries.clone(),
            count: self.values.len(),
        };
        let mut bytes = serde_json::to_vec(&header)?;
        bytes.push(b'\n');
        bytes.reserve(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(f);
        let mut line = String::new();
        reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        let header: CheckpointHeader = serde_json::from_str(line.trim_end())
            .map_err(|e| Error::parse(path, 1, format!("bad checkpoint header: {e}")))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::parse(path, 1, format!("unsupported format `{}`", header.format)));
        }
        if header.config.hash() != header.config_hash {
            return Err(Error::parse(path, 1, "config hash mismatch"));
        }
        let mut params = NetworkParams::zeros(&header.config)?;
        let shapes_match = header.tensors.len() == params.layout.entries.len()
            && header
                .tensors
                .iter()
                .zip(&params.layout.entries)
                .all(|(a, b)| a.name == b.name && a.rows == b.rows && a.cols == b.cols);
        if !shapes_match || header.count != params.len() {
            return Err(Error::parse(path, 1, "tensor shapes do not match the config"));
        }
        let mut raw = Vec::new();
        reader.read_to_end(&mut raw).map_err(|e| Error::io(path, e))?;
        if raw.len() != params.len() * 8 {
            return Err(Error::Dimension(format!(
                "{}: {} payload bytes for {} parameters",
                path.display(),
                raw.len(),
                params.len()
            )));
        }
        for (v, chunk) in params.values.iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        Ok(params)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    config_hash: String,
    config: NetworkConfig,
    tensors: Vec<TensorEntry>,
    count: usize,
}

/// Uniform `(-1/√fan_in, 1/√fan_in)` weights, zero biases, forget-gate bias 1.
pub fn init_params(config: &NetworkConfig, seed: u64) -> Result<NetworkParams> {
    let mut params = NetworkParams::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = params.layout.entries.clone();
    for e in entries.iter().filter(|e| e.name.ends_with("weight")) {
        let bound = 1.0 / (e.cols as f64).sqrt();
        for v in &mut params.values[e.range()] {
            *v = rng.gen_range(-bound..bound);
        }
    }
    let h = config.hidden;
    let b = params.layout.lstm_input.b;
    // gate order is [input, forget, candidate, output]
    params.values[b + h..b + 2 * h].iter_mut().for_each(|v| *v = 1.0);
    Ok(params)
}
