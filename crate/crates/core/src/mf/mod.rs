//! Genotype imputation by regularized low-rank matrix factorization.
//!
//! The genotype matrix `G` (samples x SNPs) is approximated by `P Q^T` with
//! `F` latent features. Fitting minimizes, over observed cells only,
//!
//! ```text
//! sse + beta/2 * (|P|_F^2 + |Q|_F^2)
//! ```
//!
//! by gradient descent. The regularizer uses squared Frobenius norms.

mod fit;
mod impute;

pub use fit::{
    mf_cost, mf_epoch, mf_fit, mf_fit_from, mf_gradients, mf_init, mf_reconstruct, mf_sweep,
    CostCurve, CostRecord, FactorPair, MfConfig, MfFit, UpdateMode,
};
pub use impute::{
    discretize, fit_accuracy, imputation_accuracy, impute, reconstruct_codes, ImputationAccuracy,
};
