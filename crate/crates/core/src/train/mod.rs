//! Multi-stage training: loss, optimizers, the training loop, checkpoints.

mod checkpoint;
mod loss;
mod objective;
mod optim;
mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::stage1::DEFAULT_MARGIN;
use crate::synth::DEFAULT_SIGMA;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{heatmap_mse, heatmap_mse_grad, mean_joint_error, msff_weights, total_loss, StageWeighting};
pub use objective::{sample_loss, sample_loss_and_grad, FrozenTerms, Labels, SampleLoss};
pub use optim::{OptimizerKind, OptimizerState};
pub use trainer::{train, LogRow, TrainState, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Floor added to every stage error before the stage weights are normalized.
    pub losswise_epsilon: f64,
    /// Use raw stage errors as loss weights instead of normalized ones.
    pub losswise_raw: bool,
    /// Steps between checkpoints; 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
    /// Stop after this many steps instead of after `epochs` epochs.
    pub max_steps: Option<usize>,
    /// Gaussian target width in heatmap cells.
    pub sigma: f64,
    /// Oracle localizer margin.
    pub margin: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 8,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            losswise_epsilon: 1e-3,
            losswise_raw: false,
            checkpoint_every: 0,
            max_steps: None,
            sigma: DEFAULT_SIGMA,
            margin: DEFAULT_MARGIN,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if !(self.losswise_epsilon > 0.0) {
            return Err(Error::config("losswise_epsilon", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.epochs == 0 && self.max_steps.is_none() {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::config("sigma", "must be positive"));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::config("margin", "must be nonnegative"));
        }
        Ok(())
    }

    /// Stage weighting implied by the model's loss-wise switch and this config.
    pub fn weighting(&self, model: &ModelConfig) -> StageWeighting {
        if !model.use_losswise {
            StageWeighting::LastOnly
        } else if self.losswise_raw {
            StageWeighting::Raw
        } else {
            StageWeighting::Normalized {
                epsilon: self.losswise_epsilon,
            }
        }
    }
}
