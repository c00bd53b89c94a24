//! Bayesian multinomial logistic-normal models fitted through a latent
//! matrix-t process: a marginal ("collapsed") posterior over the log-ratio
//! matrix `η` is optimized and Laplace-approximated, then each `η` draw is
//! completed with an exact conditional draw of the remaining parameters.

pub mod engine;
pub mod error;
pub mod gmcl;
pub mod gmdlm;
pub mod linalg;
pub mod mattcalc;
pub mod matvar;
pub mod mln;
pub mod rng;

pub use engine::{cu_sample, LaplaceFit, Likelihood, LtpModel, OptimizerConfig, PosteriorDraws, Uncollapser};
pub use error::{Error, Result};
pub use mattcalc::{MattWorkspace, SylvesterForm};
pub use matvar::{InverseWishartParams, MatrixNormalParams, MatrixTParams};
pub use mln::CountMatrix;
pub use rng::RngSeed;
