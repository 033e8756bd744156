use std::fmt;
use std::rc::Rc;

use crate::error::{AutodiffError, Result};

/// Handle to a record on a [`crate::Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId {
    pub(crate) tape: usize,
    pub(crate) index: usize,
}

/// Dense row-major `f64` array of rank 1 or 2.
///
/// Values are reference counted so the tape can keep what it needs for the
/// backward pass without copying. A tensor carries a [`NodeId`] only when it
/// depends on something that requires a gradient; everything else is a
/// plain constant and never touches a tape.
#[derive(Clone)]
pub struct Tensor {
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Rc<Vec<f64>>,
    pub(crate) node: Option<NodeId>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        validate_shape("tensor", shape)?;
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(AutodiffError::Length {
                op: "tensor",
                expected: numel,
                actual: data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Rc::new(data),
            node: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: Rc::new(vec![0.0; numel]),
            node: None,
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: Rc::new(vec![value; numel]),
            node: None,
        }
    }

    /// A `[1, n]` row vector.
    pub fn row(data: Vec<f64>) -> Self {
        Self {
            shape: vec![1, data.len()],
            data: Rc::new(data),
            node: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: Rc::new(vec![value]),
            node: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.as_ref().clone()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(AutodiffError::NotScalar {
                shape: self.shape.clone(),
            });
        }
        Ok(self.data[0])
    }

    /// True when this tensor is recorded on a tape, i.e. some gradient will
    /// flow through it.
    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    pub fn node(&self) -> Option<NodeId> {
        self.node
    }

    /// A copy of this tensor cut loose from any tape.
    pub fn detach(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: Rc::clone(&self.data),
            node: None,
        }
    }

    pub(crate) fn rows_cols(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => unreachable!("rank is validated at construction"),
        }
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .field("requires_grad", &self.node.is_some())
            .finish()
    }
}

pub(crate) fn validate_shape(op: &'static str, shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > 2 {
        return Err(AutodiffError::Rank {
            op,
            shape: shape.to_vec(),
        });
    }
    Ok(())
}
