//! Multi-output Gaussian-process regression of the unknown drift.

mod bound;
mod hyper;
mod kernel;
mod posterior;

pub use bound::{max_std_bound, BoundMode, StdBound};
pub use hyper::{
    default_initial_kernels, fit_hyperparameters, log_marginal_likelihood, HyperFit, HyperOptions,
    RestartRecord,
};
pub use kernel::{kernel_eval, KernelKind, KernelSpec};
pub use posterior::{
    posterior_mean, posterior_variance, GpPosterior, CONDITION_LIMIT, JITTER_SCHEDULE,
    VARIANCE_ROUNDOFF,
};
