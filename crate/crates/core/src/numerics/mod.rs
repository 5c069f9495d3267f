//! Dense tensors, activations, convolution, loss, Adam and dropout.

mod adam;
mod finite_diff;
mod ops;
mod param_tree;
mod rng;
mod tensor;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use finite_diff::{finite_diff_grad, relative_error};
pub use ops::{
    activation, conv1d_backward, conv1d_forward, dropout, relu, sigmoid, softmax_cross_entropy, Activation,
    Conv1dCache,
};
pub use param_tree::ParamTree;
pub use rng::{mix_seed, splitmix64, Rng};
pub use tensor::Tensor;
