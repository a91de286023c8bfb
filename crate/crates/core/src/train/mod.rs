//! Cross-entropy training with Adam, the plateau learning-rate drop, dataset
//! manifests and hard negative mining.

mod adam;
mod backward;
mod loss;
mod manifest;
mod mining;
mod trainer;

#[cfg(test)]
mod gradcheck;

use serde::{Deserialize, Serialize};

use crate::error::{KwsError, Result};
use crate::frontend::FeatureMatrix;

pub use adam::{adam_step, AdamParams, AdamState};
pub use backward::{backward, backward_weights, mean_loss};
pub use loss::{ce_loss, PROB_CLAMP};
pub use manifest::{
    read_manifest, write_manifest, ExampleLabel, ManifestRecord, RecordKind, Split,
};
pub use mining::{mine_hard_negatives, select_hard_windows, MiningReport};
pub use trainer::{
    augmented_epoch, batch_metrics, fit, load_training_data, train, write_metrics_csv,
    BatchMetrics, MetricsRow, TrainData, TrainOutcome,
};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: FeatureMatrix,
    /// 1 when the window contains the keyword.
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    /// Epochs without dev-loss improvement before the rate drops.
    pub lr_drop_patience: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub max_epochs: usize,
    /// Stops mid-epoch once this many updates have been taken.
    pub max_steps: Option<u64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamParams::default();
        Self {
            batch_size: 64,
            lr_initial: 0.001,
            lr_final: 0.0003,
            lr_drop_patience: 3,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            max_epochs: 30,
            max_steps: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(KwsError::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr_final > 0.0 && self.lr_final <= self.lr_initial) {
            return Err(KwsError::Config(format!(
                "need 0 < lr_final ({}) <= lr_initial ({})",
                self.lr_final, self.lr_initial
            )));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(KwsError::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps > 0.0) {
            return Err(KwsError::Config("adam_eps must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}
