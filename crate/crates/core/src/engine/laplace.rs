use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::lbfgs::{minimize_scaled, LbfgsSettings, Termination};
use super::model::{Likelihood, LtpModel};
use crate::error::{Error, Result};
use crate::linalg::{standard_normal_matrix, SpdFactor};
use crate::rng::RngSeed;

#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// ALR of the column proportions of `Y + pseudo`.
    PseudoCountAlr {
        pseudo: f64,
    },
    UserSupplied(DMatrix<f64>),
    /// The prior mean `B`.
    PriorMean,
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy::PseudoCountAlr { pseudo: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub memory: usize,
    /// Stop once the gradient sup-norm is at most this.
    pub grad_tol: f64,
    /// Stop once a step changes the objective by at most this fraction of its
    /// magnitude and the gradient sup-norm has not reached a new minimum for
    /// the last 50 accepted steps.
    pub rel_fun_tol: f64,
    pub max_iter: usize,
    pub init: InitStrategy,
    /// Eigenvalues of the Hessian below `clip_ratio · λ_max` are raised to that
    /// floor when Cholesky fails.
    pub clip_ratio: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            memory: 10,
            grad_tol: 1e-4,
            rel_fun_tol: 1e-11,
            max_iter: 10_000,
            init: InitStrategy::default(),
            clip_ratio: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::Parameter("optimizer memory must be at least 1".into()));
        }
        if !(self.grad_tol > 0.0) || !(self.rel_fun_tol >= 0.0) || !(self.clip_ratio > 0.0) {
            return Err(Error::Parameter("optimizer tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Parameter("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Cholesky,
    ClippedEigen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceDiagnostics {
    pub factor: FactorKind,
    /// Number of Hessian eigenvalues raised to the floor; zero for Cholesky.
    pub clipped_eigenvalues: usize,
    /// Largest `|H_ij - H_ji|` before symmetrization.
    pub asymmetry: f64,
}

/// The posterior mode of `η` and, once built, a factorization of the
/// Hessian of the negative log collapsed posterior there.
#[derive(Debug, Clone)]
pub struct LaplaceFit {
    pub eta_hat: DMatrix<f64>,
    pub hess_factor: Option<SpdFactor>,
    /// Log collapsed posterior at the mode, up to the dropped constants.
    pub log_post_at_mode: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_sup_norm: f64,
    pub termination: Termination,
    /// Objective after each accepted optimizer step.
    pub trace: Vec<f64>,
    pub diagnostics: Option<LaplaceDiagnostics>,
}

impl LaplaceFit {
    pub fn clipped(&self) -> bool {
        self.diagnostics.as_ref().is_some_and(|d| d.factor == FactorKind::ClippedEigen)
    }
}

fn initial_point<L: Likelihood>(model: &LtpModel<L>, init: &InitStrategy) -> Result<DMatrix<f64>> {
    let x = match init {
        InitStrategy::PseudoCountAlr { pseudo } => model.likelihood().pseudo_count_init(*pseudo)?,
        InitStrategy::PriorMean => model.prior().mean.clone(),
        InitStrategy::UserSupplied(x) => {
            if x.shape() != model.eta_shape() {
                return Err(Error::Dimension(format!(
                    "initial eta is {:?}, expected {:?}",
                    x.shape(),
                    model.eta_shape()
                )));
            }
            x.clone()
        }
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Initialization("initial eta has non-finite entries".into()));
    }
    Ok(x)
}

/// Posterior mode of `η` by L-BFGS. Returns the best point with
/// `converged = false` when the iteration limit is hit first.
pub fn map_estimate<L: Likelihood>(model: &LtpModel<L>, config: &OptimizerConfig) -> Result<LaplaceFit> {
    config.validate()?;
    let (p, n) = model.eta_shape();
    let x0 = initial_point(model, &config.init)?;
    let settings = LbfgsSettings {
        memory: config.memory,
        grad_tol: config.grad_tol,
        rel_fun_tol: config.rel_fun_tol,
        max_iter: config.max_iter,
    };
    let objective = |x: &DVector<f64>| -> Result<(f64, DVector<f64>)> {
        let eta = DMatrix::from_column_slice(p, n, x.as_slice());
        match model.objective_and_gradient(&eta) {
            Ok((v, g)) => Ok((v, DVector::from_column_slice(g.as_slice()))),
            Err(Error::Singular(_)) | Err(Error::NotPositiveDefinite(_)) => Ok((f64::INFINITY, DVector::zeros(p * n))),
            Err(e) => Err(e),
        }
    };
    let curvature = model.curvature_diagonal(&x0)?;
    let curvature = DVector::from_column_slice(curvature.as_slice());
    let result = minimize_scaled(objective, DVector::from_column_slice(x0.as_slice()), &settings, Some(&curvature))?;
    let grad_sup_norm = result.grad_sup_norm();
    Ok(LaplaceFit {
        eta_hat: DMatrix::from_column_slice(p, n, result.x.as_slice()),
        hess_factor: None,
        log_post_at_mode: -result.value,
        iterations: result.iterations,
        converged: grad_sup_norm <= config.grad_tol,
        grad_sup_norm,
        termination: result.termination,
        trace: result.trace,
        diagnostics: None,
    })
}

/// Factors the Hessian at the mode: Cholesky, else clipped eigendecomposition.
pub fn build_laplace<L: Likelihood>(fit: LaplaceFit, model: &LtpModel<L>, clip_ratio: f64) -> Result<LaplaceFit> {
    let (h, asymmetry) = model.objective_hessian(&fit.eta_hat)?;
    let (factor, clipped) = SpdFactor::new(&h, clip_ratio)?;
    let kind = match factor {
        SpdFactor::Cholesky { .. } => FactorKind::Cholesky,
        SpdFactor::Eigen { .. } => FactorKind::ClippedEigen,
    };
    Ok(LaplaceFit {
        hess_factor: Some(factor),
        diagnostics: Some(LaplaceDiagnostics { factor: kind, clipped_eigenvalues: clipped, asymmetry }),
        ..fit
    })
}

/// Draws from `N(vec η̂, H⁻¹)`. Draw `s` uses stream `s` of `seed`, so the
/// result does not depend on how draws are batched or scheduled.
pub fn sample_laplace(fit: &LaplaceFit, draws: usize, seed: RngSeed) -> Result<Vec<DMatrix<f64>>> {
    let factor = fit
        .hess_factor
        .as_ref()
        .ok_or_else(|| Error::Parameter("Laplace fit has no Hessian factor; call build_laplace first".into()))?;
    if draws == 0 {
        return Ok(Vec::new());
    }
    let (p, n) = fit.eta_hat.shape();
    let dim = p * n;
    let columns: Vec<DMatrix<f64>> =
        (0..draws).into_par_iter().map(|s| standard_normal_matrix(dim, 1, &mut seed.stream(s as u64))).collect();
    let mut z = DMatrix::<f64>::zeros(dim, draws);
    for (s, col) in columns.into_iter().enumerate() {
        z.set_column(s, &col.column(0));
    }
    factor.apply_inverse_sqrt(&mut z);
    let base = fit.eta_hat.as_slice();
    Ok((0..draws)
        .map(|s| {
            let mut eta = DMatrix::from_column_slice(p, n, z.column(s).as_slice());
            for (e, b) in eta.iter_mut().zip(base) {
                *e += b;
            }
            eta
        })
        .collect())
}
