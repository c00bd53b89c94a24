//! Simulation, evaluation metrics, baselines and file plumbing around the
//! `mlnltp` engine, plus the pieces behind the `mlnltp` command-line tool.

pub mod config;
pub mod error;
pub mod fit;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod pclm;
pub mod ppc;
pub mod reference;
pub mod sim;

pub use config::FitConfig;
pub use error::{BenchError, Result};
pub use fit::{fit_inputs, run_fit, write_fit_report, FitInputs, FitOutput, FitReport};
pub use metrics::{default_prior, rmse_lambda, rmse_sd, seconds_per_effective_sample, MatrixSummary};
pub use pclm::pclm_fit;
pub use ppc::posterior_predictive;
pub use reference::{mcmc_reference, McmcSettings, ReferencePosterior};
pub use sim::{simulate_mln, Dataset};
