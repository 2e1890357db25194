//! Bayesian recurrent predictor trained with per-sequence dropout masks.

mod config;
mod loss;
mod masks;
mod network;
mod params;
mod train;

pub use config::{NetworkConfig, RegressionOutput};
pub use loss::{backward, compute_loss, smooth_l1, softmax, Gradients, LossTerms};
pub use masks::{sample_masks, DropoutMasks};
pub use network::{forward, RawOutputs, RecurrentState};
pub use params::{init_params, NetworkParams, TensorEntry};
pub use train::{train, train_from, Adam, EpochLog, TrainingLog, TrainingVideo};
