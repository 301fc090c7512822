//! Dense tensors, reverse-mode gradients, plain SGD, and a gradient checker.

mod gradcheck;
mod graph;
mod sgd;
mod tensor;

pub use gradcheck::{finite_diff_check, CheckReport, RootBuilder};
pub use graph::{sigmoid, Gradients, Graph, NodeId, LOG_FLOOR};
pub use sgd::{sgd_step, SgdConfig};
pub use tensor::Tensor;
