//! Anticipation of sparse instrument usage with uncertainty estimates.

pub mod analysis;
pub mod baselines;
pub mod error;
pub mod inference;
pub mod labels;
pub mod metrics;
pub mod model;
pub mod par;
pub mod workflow;

pub use error::{Error, Result};
pub use par::Exec;
