use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("layer {index} ({kind}): {message}")]
    Layer {
        index: usize,
        kind: &'static str,
        message: String,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("alignment error for feature `{feature}`: {message}")]
    Alignment { feature: String, message: String },

    #[error("encoding error for feature `{feature}`: {message}")]
    Encoding { feature: String, message: String },

    #[error("partition error: {0}")]
    Partition(String),

    #[error("image mask error: {0}")]
    Mask(String),

    #[error("composition error: {0}")]
    Composition(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("empty input: {0}")]
    Empty(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
