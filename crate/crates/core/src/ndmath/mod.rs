//! Dense tensors and a small reverse-mode tape.
//!
//! Only the handful of operations the reader graph needs are provided. Every
//! forward op checks its output for NaN/Inf and fails instead of propagating
//! non-finite values.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, GradCheckReport, TensorCheck};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Real, Tensor};

pub(crate) use tensor::{gemm_acc, gemm_at_acc, gemm_bt_acc};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NdError {
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} needs {} elements, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: non-finite value in output")]
    NonFinite { op: &'static str },
    #[error("masked_softmax: row {row} has no unmasked entry")]
    EmptyMask { row: usize },
    #[error("scatter_add: group id {id} out of range for {groups} groups")]
    GroupOutOfRange { id: usize, groups: usize },
    #[error("{op}: index {index} out of range for extent {extent}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        extent: usize,
    },
    #[error("backward: output must be a single element, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
}
