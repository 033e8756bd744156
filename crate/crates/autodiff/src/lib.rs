//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Tensors are rank 1 or 2, row-major. Operations are methods on a [`Tape`];
//! a result is recorded only if one of its inputs is. Leaves created with
//! [`Tape::param`] or [`Tape::leaf`] require gradients, everything else is a
//! constant.
//!
//! ```
//! use tagsum_autodiff::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let x = tape.param(&[1], vec![3.0]).unwrap();
//! let y = tape.sum(&tape.mul(&x, &x).unwrap()).unwrap();
//! tape.backward(&y).unwrap();
//! assert_eq!(tape.grad(&x).unwrap(), vec![6.0]);
//! # let _ = Tensor::scalar(0.0);
//! ```

mod error;
mod gradcheck;
mod tape;
mod tensor;

pub use error::{AutodiffError, Result};
pub use gradcheck::{grad_check, relative_error, GradCheck, DEFAULT_EPSILON};
pub use tape::Tape;
pub use tensor::{NodeId, Tensor};
