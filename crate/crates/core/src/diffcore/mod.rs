//! Reverse-mode differentiation over dense `f64` matrices, plus Adam.

mod adam;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS};
pub use gradcheck::{grad_check, RELATIVE_ERROR_FLOOR};
pub use graph::{
    sigmoid, softmax_in_place, Bindings, Gradients, Graph, NodeGradients, NodeId, Noise,
    ParamStore, LOG_CLAMP_MAX, LOG_CLAMP_MIN,
};
pub use tensor::Tensor;
