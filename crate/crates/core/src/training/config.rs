use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::TrainError;

/// Hyperparameters and inputs of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub clip_threshold: f64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    pub max_epochs: usize,
    /// Batches per length-sorting buffer.
    pub prefetch: usize,
    /// Epochs below the best validation accuracy tolerated before stopping.
    pub patience: usize,
    /// Permute entity ids per batch during training.
    pub reshuffle_entities: bool,
    /// Cap on vocabulary size; `None` keeps every token.
    pub vocab_size: Option<usize>,
    pub train_path: Option<PathBuf>,
    pub valid_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 32,
            clip_threshold: 10.0,
            embed_dim: 128,
            hidden_dim: 128,
            seed: 0,
            max_epochs: 10,
            prefetch: 10,
            patience: 1,
            reshuffle_entities: true,
            vocab_size: None,
            train_path: None,
            valid_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(self.clip_threshold > 0.0 && self.clip_threshold.is_finite()) {
            return bad(format!(
                "clip_threshold must be positive, got {}",
                self.clip_threshold
            ));
        }
        if self.batch_size == 0 || self.prefetch == 0 {
            return bad("batch_size and prefetch must be at least 1".into());
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return bad("embed_dim and hidden_dim must be at least 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        Ok(())
    }
}
