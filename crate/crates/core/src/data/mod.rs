//! Example ingestion, vocabulary, batching and entity reshuffling.

mod batch;
mod cbt;
mod example;
mod news;
mod synthetic;
mod vocab;

pub use batch::{apply_entity_permutation, make_batches, plan_batches, reshuffle_entities, Batch};
pub use cbt::{parse_cbt, write_cbt, CBT_BLANK, CBT_CANDIDATES};
pub use example::{read_canonical, write_canonical, Example, PLACEHOLDER};
pub use news::{parse_anonymized, write_anonymized};
pub use synthetic::{gen_synthetic, SyntheticSpec, MARKER};
pub use vocab::{is_entity_token, EncodedExample, Vocabulary, PAD, PLACEHOLDER_ID, RESERVED, UNK};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("example {id}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("vocabulary: {0}")]
    Vocab(String),
}
