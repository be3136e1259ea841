//! Three-branch ReLU network for timing models.
//!
//! The secret branch ends in `k` interface units that are hard-thresholded to
//! bits; the joint branch sees the secret inputs only through those bits, so
//! the predicted time depends on a secret `x` only via its interface
//! valuation. With `k = 0` the secret branch is absent altogether.

mod adam;
mod dense;
mod grad;
mod io;
mod model;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use dense::Dense;
pub use grad::loss_and_gradients;
pub use io::{from_json, load, save, to_json, MODEL_FORMAT, MODEL_VERSION};
pub use model::{binarize, ParamSet, TriBranchNetwork};
pub use train::{evaluate, r2, sse, train, train_from, EpochRecord, Metrics, TrainHistory};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("dimension mismatch: expected {expected} {what}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite loss{}", .epoch.map(|e| format!(" at epoch {e}")).unwrap_or_default())]
    NonFiniteLoss { epoch: Option<usize> },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("model schema version mismatch: found {found}, expected {expected}")]
    SchemaVersionMismatch { found: String, expected: String },
    #[error("model parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
}

/// Branch widths and input dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Interface width in bits.
    pub k: usize,
    pub secret_widths: Vec<usize>,
    pub public_widths: Vec<usize>,
    pub joint_widths: Vec<usize>,
    /// Secret input dimension.
    pub n: usize,
    /// Public input dimension.
    pub m: usize,
}

impl Architecture {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let all = self
            .secret_widths
            .iter()
            .chain(&self.public_widths)
            .chain(&self.joint_widths);
        if all.clone().any(|&w| w == 0) {
            return Err(NetworkError::InvalidArchitecture(
                "every hidden width must be at least 1".into(),
            ));
        }
        if self.k > 0 && self.n == 0 {
            return Err(NetworkError::InvalidArchitecture(format!(
                "k = {} needs at least one secret input",
                self.k
            )));
        }
        if self.k > 30 {
            return Err(NetworkError::InvalidArchitecture(format!(
                "interface width {} is beyond the supported 30 bits",
                self.k
            )));
        }
        Ok(())
    }

    /// Same hidden widths with a different interface width.
    pub fn with_k(&self, k: usize) -> Architecture {
        Architecture { k, ..self.clone() }
    }

    /// Width of the public branch output.
    pub fn public_out(&self) -> usize {
        self.public_widths.last().copied().unwrap_or(self.m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Straight-through gradients pass where `|preact| <= ste_clip`.
    pub ste_clip: f64,
    /// Factor applied to the learning rate when validation SSE stalls for
    /// `patience` epochs; training resumes from the best snapshot.
    pub lr_decay: f64,
    /// Stalls tolerated before stopping; 0 stops at the first stall.
    pub max_decays: usize,
    /// Stop training the secret branch at the first stall, so the interface
    /// is fixed while the rest of the network settles.
    pub freeze_interface: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            batch_size: 32,
            max_epochs: 2000,
            patience: 100,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            ste_clip: 1.0,
            lr_decay: 0.5,
            max_decays: 4,
            freeze_interface: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let bad = |m: &str| Err(NetworkError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(self.ste_clip > 0.0) {
            return bad("ste_clip must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return bad("lr_decay must lie in (0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}
