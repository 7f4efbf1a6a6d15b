use std::path::PathBuf;

use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid shape {0:?}: every dimension must be at least 1")]
    InvalidShape([usize; 4]),

    #[error("data length {got} does not match shape {shape} (expected {expected})")]
    LengthMismatch {
        shape: Shape,
        expected: usize,
        got: usize,
    },

    #[error("shape mismatch in {op}: {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("invalid convolution: {0}")]
    InvalidConv(String),

    #[error("{what}: {value} is not divisible by {divisor}")]
    Divisibility {
        what: &'static str,
        value: usize,
        divisor: usize,
    },

    #[error("{op} expects {expected} channels, got {got}")]
    ChannelCount {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("loss node must hold a scalar, found shape {0}")]
    NonScalarLoss(Shape),

    #[error("operator `{0}` has no registered adjoint")]
    MissingAdjoint(String),

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("mask must be strictly binary, found value {0}")]
    NonBinaryMask(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn divisibility(what: &'static str, value: usize, divisor: usize) -> Self {
        Error::Divisibility {
            what,
            value,
            divisor,
        }
    }
}
