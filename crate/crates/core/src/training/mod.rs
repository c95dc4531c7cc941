//! Initialization, optimization, the epoch loop and single-model evaluation.

mod config;
mod eval;
mod init;
mod optim;
mod trainer;

pub use config::TrainConfig;
pub use eval::{
    argmax, encode_all, evaluate, predict_encoded, Evaluation, Skipped, EVAL_BATCH_SIZE,
};
pub use init::{
    init_params, orthogonal, orthogonality_error, random_orthogonal, EMBEDDING_INIT_RANGE,
};
pub use optim::{clip_gradients, global_norm, AdamConfig, AdamState};
pub use trainer::{
    loss_and_gradients, new_adam, seeded_stream, train, train_step, train_with, EpochRecord,
    StepStats, TrainOutcome, TrainingLog,
};

use crate::data::DataError;
use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value in {op} at epoch {epoch}, batch {batch} (first example {first_id})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        first_id: String,
        op: &'static str,
    },
    #[error("non-finite gradient in parameter tensor {tensor}")]
    NonFiniteGradient { tensor: usize },
}

impl From<crate::ndmath::NdError> for TrainError {
    fn from(e: crate::ndmath::NdError) -> Self {
        TrainError::Model(ModelError::Nd(e))
    }
}
