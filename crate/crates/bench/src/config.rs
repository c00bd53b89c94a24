//! Fit configuration: a flat TOML file of typed keys. Unknown keys are
//! errors.

use std::fs;
use std::path::Path;

use mlnltp::engine::{InitStrategy, OptimizerConfig};
use mlnltp::gmcl::GmclHyper;
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{BenchError, Result};
use crate::metrics::default_prior;

pub const DEFAULT_DRAWS: usize = 2000;
pub const DEFAULT_PSEUDO: f64 = 0.5;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub draws: Option<usize>,
    pub seed: Option<u64>,
    /// Pseudo-count for the optimizer start.
    pub pseudo: Option<f64>,

    /// Prior overrides; anything unset comes from the default prior.
    pub upsilon: Option<f64>,
    /// `Γ = gamma · I_Q`.
    pub gamma: Option<f64>,
    /// Diagonal and off-diagonal entries of `Ξ`.
    pub xi_diag: Option<f64>,
    pub xi_offdiag: Option<f64>,
    /// Every entry of `Θ`.
    pub theta: Option<f64>,

    pub grad_tol: Option<f64>,
    pub rel_fun_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub memory: Option<usize>,
    pub clip_ratio: Option<f64>,
}

impl FitConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| BenchError::file(path, e))?;
        Self::parse(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    /// Keys set in `other` win.
    pub fn merged(&self, other: &FitConfig) -> FitConfig {
        macro_rules! pick {
            ($($f:ident),*) => { FitConfig { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            draws,
            seed,
            pseudo,
            upsilon,
            gamma,
            xi_diag,
            xi_offdiag,
            theta,
            grad_tol,
            rel_fun_tol,
            max_iter,
            memory,
            clip_ratio
        )
    }

    pub fn draws(&self) -> usize {
        self.draws.unwrap_or(DEFAULT_DRAWS)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn pseudo(&self) -> Result<f64> {
        let p = self.pseudo.unwrap_or(DEFAULT_PSEUDO);
        if !(p > 0.0) || !p.is_finite() {
            return Err(BenchError::Config(format!("pseudo must be positive, got {p}")));
        }
        Ok(p)
    }

    /// The default prior for `D` categories and `Q` covariates with any
    /// overrides applied.
    pub fn prior(&self, d: usize, q: usize) -> Result<GmclHyper> {
        let base = default_prior(d, q)?;
        let p = d - 1;
        let upsilon = self.upsilon.unwrap_or(base.upsilon);
        let xi = match (self.xi_diag, self.xi_offdiag) {
            (None, None) => base.xi,
            (diag, off) => {
                let diag = diag.unwrap_or(base.xi[(0, 0)]);
                let off = off.unwrap_or(if p > 1 { base.xi[(0, 1)] } else { 0.0 });
                DMatrix::from_fn(p, p, |i, j| if i == j { diag } else { off })
            }
        };
        let gamma = self.gamma.map_or(base.gamma, |g| DMatrix::identity(q, q) * g);
        let theta = self.theta.map_or(base.theta, |t| DMatrix::from_element(p, q, t));
        GmclHyper::new(theta, gamma, xi, upsilon).map_err(|e| BenchError::Config(format!("prior: {e}")))
    }

    pub fn optimizer(&self) -> Result<OptimizerConfig> {
        let d = OptimizerConfig::default();
        let config = OptimizerConfig {
            memory: self.memory.unwrap_or(d.memory),
            grad_tol: self.grad_tol.unwrap_or(d.grad_tol),
            rel_fun_tol: self.rel_fun_tol.unwrap_or(d.rel_fun_tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            init: InitStrategy::PseudoCountAlr { pseudo: self.pseudo()? },
            clip_ratio: self.clip_ratio.unwrap_or(d.clip_ratio),
        };
        config.validate().map_err(|e| BenchError::Config(format!("optimizer: {e}")))?;
        Ok(config)
    }
}
