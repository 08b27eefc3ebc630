//! Kernel ridge regression with an RBF kernel, exact and Nystrom-sketched.
//!
//! The exact solver costs `O(n^2 d + n^3)` time and `O(n^2)` memory. The
//! sketched solver samples `s` landmark columns, factors the kernel as
//! `Psi Psi^T` with `Psi` of size `n x s`, and solves the regularized system
//! through the Woodbury identity in `O(n d s + n s^2)` time and `O(n d + n s)`
//! memory.

pub mod cv;
pub mod error;
pub mod features;
pub mod io;
pub mod kernel;
pub mod krr;
pub mod metrics;
pub mod nystrom;
pub mod sampling;

pub use cv::{cross_validate, kfold_indices, CvResult, CvScore, Fold};
pub use error::{Error, Result};
pub use features::{FeatureMatrix, KernelConfig, Standardizer};
pub use io::{decode_model, encode_model, load_model, save_model};
pub use kernel::{cross_kernel, kernel_matrix, rbf, sigma_heuristic};
pub use krr::{
    smw_inverse_apply, train_exact, train_exact_multi, train_nystrom, train_nystrom_multi,
    KrrModel, SmwSolver, TrainOptions, TrainReport, Variant, DEFAULT_EXACT_CEILING,
};
pub use metrics::mae;
pub use sampling::{derive_seed, permutation, rng_for, sample_without_replacement};
pub use nystrom::{
    approximation_error, build_sketch, sample_columns, Norm, NystromSketch, DEFAULT_EIGEN_CUTOFF,
};
