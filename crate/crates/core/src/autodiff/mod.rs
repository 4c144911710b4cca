//! Reverse-mode automatic differentiation over dense `f64` tensors.

pub mod gradcheck;
pub mod svd;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_many, primitive_suite, CheckResult};
pub use svd::{svd, Svd};
pub use tape::{Gradients, Tape, Var, EPS_LOG, NUCLEAR_REL_CUTOFF};
pub use tensor::{matmul, Tensor};
