//! Network building blocks: dense stacks, gumbel-softmax, and the
//! variable-splitting input/output layers.

mod dense;
mod gumbel;
mod split;

pub use dense::{xavier_uniform, Dense, LayerStack};
pub use gumbel::{gumbel_noise, gumbel_softmax, gumbel_softmax_node, gumbel_softmax_with_noise};
pub use split::{MultiInputAdapter, MultiOutputHead, OutputHead};
