//! Dense tensors, reverse-mode differentiation and the Adam optimizer.

mod adam;
mod graph;
mod tensor;

pub use adam::{Adam, BETA1, BETA2, EPSILON};
pub use graph::{log_sum_exp, Gradients, Graph, Var, LOG_SCALE_MAX, LOG_SCALE_MIN};
pub use tensor::Tensor;
