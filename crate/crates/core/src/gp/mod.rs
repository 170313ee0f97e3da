//! Gaussian-process machinery for the kernel grammar.

pub mod kernel;
pub mod process;

pub use kernel::{
    sample_hyperparams, KernelFamily, KernelParams, KernelSpec, LinearAtom, MixtureComponent, PeriodicAtom, RbfAtom,
};
pub use process::{
    covariance, extrapolate, extrapolate_offset, gaussian_log_density, jittered_cholesky, kernel_matrix, log_marginal_likelihood,
    posterior_mean, sample_gp, Conditioner, CovMatrix, Grid,
};
