//! Dense matrices, seeded initialization and elementwise activations.

mod activation;
mod matrix;
mod rng;

pub use activation::{activation_apply, activation_grad, sigmoid, Activation};
pub use matrix::{dot, frobenius_sq, matmul, InitKind, InitSpec, Matrix};
pub use rng::{derive_seed, Rng};
