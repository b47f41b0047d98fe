use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("softmax row {row} has every entry masked")]
    DegenerateRow { row: usize },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("molecule has {0} heavy atoms, capacity is {max}", max = crate::N_SLOTS)]
    Capacity(usize),
    #[error("contract violation: {0}")]
    Contract(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
}
