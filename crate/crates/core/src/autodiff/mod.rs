//! Reverse-mode differentiation over a recorded tape of tensor operations.

mod adam;
mod gradcheck;
mod graph;
mod kernels;

pub use adam::{adam_step, Adam, AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON};
pub use gradcheck::{grad_check, relative_error, CoordError, GradCheckConfig, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
