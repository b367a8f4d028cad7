//! Dense matrix kernel with reverse-mode differentiation, LSTM cells, Adam
//! and a binary checkpoint format.

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;
mod lstm;
mod tensor;

pub use adam::AdamState;
pub use checkpoint::{read_checkpoint, write_checkpoint, MAGIC};
pub use gradcheck::{finite_diff_grad, relative_error};
pub use graph::{softmax_rows, Graph, Mat, Var};
pub use lstm::{bilstm_encode, lstm_scan, lstm_step, zero_state, LstmWeights};
pub use tensor::{ParamStore, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("empty softmax row")]
    EmptySoftmaxRow,
    #[error("empty sequence")]
    EmptySequence,
    #[error("target {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("backward already ran on this graph; reset it first")]
    BackwardTwice,
    #[error("unknown parameter {0}")]
    MissingParam(String),
    #[error("parameter {0} registered twice")]
    DuplicateParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Stand-alone cross-entropy of a logit vector, −log softmax(logits)[target].
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<f64, KernelError> {
    if target >= logits.len() {
        return Err(KernelError::TargetOutOfRange { target, classes: logits.len() });
    }
    Ok(graph::log_sum_exp(logits) - logits[target])
}
