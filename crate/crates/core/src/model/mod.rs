//! The reader: embeddings, document/query encoders, attention and the
//! attention-sum answer distribution.

mod checkpoint;
mod encoder;
mod params;
mod reader;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, FORMAT_VERSION, MAGIC};
pub use encoder::{bidirectional, gru_step, unroll, BiStates};
pub use params::{BiGru, BiGruVars, Dims, GruVars, GruWeights, ModelParams, ParamVars};
pub use reader::{
    answer_distribution, attention, batch_loss, candidate_probabilities, encode_document,
    encode_documents, encode_queries, encode_query, forward_batch, gradient_check, rank_candidates,
    trace_example, BatchForward, ForwardTrace, LOG_FLOOR,
};

use crate::ndmath::NdError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Nd(#[from] NdError),
    #[error("{0}")]
    Shape(String),
    #[error("empty document")]
    EmptyDocument,
    #[error("empty query")]
    EmptyQuery,
    #[error("example {0} has no answer")]
    MissingAnswer(String),
    #[error("answer of {0} does not occur in its document")]
    AnswerNotInDocument(String),
}
