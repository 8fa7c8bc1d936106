//! Tape-based reverse-mode automatic differentiation over dense `f64`
//! tensors of rank ≤ 2.
//!
//! Ops evaluate eagerly while they are recorded (define-by-run). A call to
//! [`Tape::backward`] walks the tape in reverse recording order and returns
//! the adjoint of every node with respect to a single-element root.
//!
//! ```
//! use gcs_core::autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let w = tape.param(Tensor::scalar(3.0));
//! let y = tape.square(w).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.wrt(w).item(), 6.0);
//! ```

mod check;
mod tape;
mod tensor;

pub use check::{gradient_check, GradientCheck};
pub use tape::{Gradients, OpKind, Tape, Var};
pub use tensor::Tensor;
