//! Genotype imputation by regularized matrix factorization and phenotype
//! prediction with recurrent networks.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: dense matrices, seeded initialization, activations.
//! - [`geno`]: genotype/phenotype tables, CSV I/O, splits, synthetic data and
//!   sequence assembly.
//! - [`mf`]: latent-factor fitting by gradient descent and imputation.
//! - [`rnn`]: simple tanh, LSTM and identity-initialized ReLU recurrent cells
//!   trained with backpropagation through time.
//! - [`pipeline`]: the impute-then-predict workflow and its reports.
//! - [`gradcheck`]: finite-difference verification of both gradient paths.

// Negated float comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geno;
pub mod gradcheck;
pub mod linalg;
pub mod mf;
pub mod pipeline;
pub mod rnn;

pub use error::{Error, ErrorKind, Result};
