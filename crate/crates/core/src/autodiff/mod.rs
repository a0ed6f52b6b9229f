//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records each primitive as it is evaluated. Parameters enter the
//! tape as named leaves; [`Tape::backward`] returns their gradients by name so
//! the caller decides which store to accumulate them into.

mod gradcheck;
mod kernels;
mod param;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_gradient, max_relative_error};
pub use param::{Gradients, Param, ParamSet, ParamStore};
pub use tape::{Tape, Var, PROB_CLAMP};
pub use tensor::Tensor;

