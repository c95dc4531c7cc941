//! Per-model prediction files and ensembles built from them.

mod predictions;
mod select;

pub use predictions::{Prediction, PredictionSet, HEADER};
pub use select::{
    average, avg_ensemble, avg_ensemble_size, greedy_ensemble, rank_models, top20_statistic,
    top_fraction_size, GreedyResult, GreedyStep, ModelResult, ModelScore,
};

#[derive(Debug, thiserror::Error)]
pub enum EnsembleError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("{0}")]
    Mismatch(String),
    #[error("no models given")]
    Empty,
    #[error("{0}: no labeled examples to score")]
    Unlabeled(String),
}
