use thiserror::Error;

pub type Result<T> = std::result::Result<T, AutodiffError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: unsupported rank for shape {shape:?} (tensors are rank 1 or 2)")]
    Rank { op: &'static str, shape: Vec<usize> },
    #[error("{op}: expected {expected} values, got {actual}")]
    Length {
        op: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    Axis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: index {index} out of range for length {len}")]
    Index {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{op}: empty input list")]
    Empty { op: &'static str },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("tensor is not recorded on this tape")]
    NotOnTape,
}
