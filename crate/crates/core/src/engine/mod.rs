//! The collapsed-posterior objective, its mode and Laplace approximation, and
//! the collapse-uncollapse sampler built on them.

mod cu;
mod kernel;
mod laplace;
pub mod lbfgs;
mod model;

pub use cu::{cu_sample, laplace_seed, uncollapse_all, uncollapse_seed, PosteriorDraws, Uncollapser};
pub use kernel::rbf_kernel;
pub use laplace::{
    build_laplace, map_estimate, sample_laplace, FactorKind, InitStrategy, LaplaceDiagnostics, LaplaceFit,
    OptimizerConfig,
};
pub use model::{neg_log_collapsed_posterior, Likelihood, LtpModel};
