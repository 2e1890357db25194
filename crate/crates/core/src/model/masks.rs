use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::NetworkConfig;
use crate::error::Result;

/// One posterior sample: inverted-dropout masks for the encoder input, the
/// recurrent input and the previous hidden state. Fixed for a whole sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub input: Vec<f64>,
    pub recurrent_input: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl DropoutMasks {
    /// All-ones masks (no dropout).
    pub fn identity(config: &NetworkConfig) -> Self {
        Self {
            input: vec![1.0; config.input_dim],
            recurrent_input: vec![1.0; config.encoded_dim()],
            hidden: vec![1.0; config.hidden],
        }
    }

    pub fn matches(&self, config: &NetworkConfig) -> bool {
        self.input.len() == config.input_dim
            && self.recurrent_input.len() == config.encoded_dim()
            && self.hidden.len() == config.hidden
    }

    pub fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.input
            .iter()
            .chain(&self.recurrent_input)
            .chain(&self.hidden)
            .copied()
    }
}

/// I.i.d. Bernoulli(1 − p) masks scaled by `1/(1 − p)`.
pub fn sample_masks(config: &NetworkConfig, seed: u64) -> Result<DropoutMasks> {
    config.validate()?;
    let p = config.dropout;
    if p == 0.0 {
        return Ok(DropoutMasks::identity(config));
    }
    let keep = 1.0 / (1.0 - p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| if rng.gen_bool(1.0 - p) { keep } else { 0.0 })
            .collect()
    };
    Ok(DropoutMasks {
        input: draw(config.input_dim),
        recurrent_input: draw(config.encoded_dim()),
        hidden: draw(config.hidden),
    })
}
