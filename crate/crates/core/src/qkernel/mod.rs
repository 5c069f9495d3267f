//! Quantum fidelity kernels over block-product angle-encoded states.
//!
//! Each block of `q` features is encoded on `q` qubits by an `RY(w_k x_k)`
//! layer, optionally followed by `depth` rounds of a CNOT ring and another
//! `RY` re-uploading layer. The kernel of two inputs is the product over
//! blocks of `|<psi_b|psi_a>|^2`. With `depth = 0` the blocks are product
//! states and the kernel collapses to `prod_k cos^2(w_k (a_k - b_k) / 2)`.

mod kernel;
mod statevector;

pub use kernel::{
    closed_form_kernel, fidelity_statevector, gram_matrix, kernel_grad, kernel_grad_analytic,
    kernel_grad_parameter_shift, kernel_value, kernel_value_and_grad, KernelConfig, KernelGrad,
};
pub use statevector::{block_angles, block_fidelity, encode_block, BlockStatevector, MAX_BLOCK_QUBITS};
