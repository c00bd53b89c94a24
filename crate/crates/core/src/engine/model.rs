use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::mattcalc::MattWorkspace;
use crate::matvar::MatrixTParams;
use crate::mln::{
    log_multinomial_coefficient, multinom_hessian, multinom_log_lik, multinom_value_and_gradient, BlockHessian,
    CountMatrix,
};

/// An observation model `p(Y | η)` with a block-diagonal Hessian in `η`.
pub trait Likelihood: Send + Sync {
    /// `(P, N)`, the shape of `η`.
    fn eta_shape(&self) -> (usize, usize);

    /// Log-likelihood up to the constant reported by [`Likelihood::log_constant`].
    fn log_lik(&self, eta: &DMatrix<f64>) -> Result<f64>;

    fn value_and_gradient(&self, eta: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)>;

    fn hessian(&self, eta: &DMatrix<f64>) -> Result<BlockHessian>;

    /// The `η`-free additive constant dropped from [`Likelihood::log_lik`].
    fn log_constant(&self) -> f64;

    /// A finite starting point close to the likelihood mode.
    fn pseudo_count_init(&self, pseudo: f64) -> Result<DMatrix<f64>>;
}

impl Likelihood for CountMatrix {
    fn eta_shape(&self) -> (usize, usize) {
        (self.log_ratio_dim(), self.samples())
    }

    fn log_lik(&self, eta: &DMatrix<f64>) -> Result<f64> {
        multinom_log_lik(self, eta)
    }

    fn value_and_gradient(&self, eta: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        multinom_value_and_gradient(self, eta)
    }

    fn hessian(&self, eta: &DMatrix<f64>) -> Result<BlockHessian> {
        multinom_hessian(self, eta)
    }

    fn log_constant(&self) -> f64 {
        log_multinomial_coefficient(self)
    }

    fn pseudo_count_init(&self, pseudo: f64) -> Result<DMatrix<f64>> {
        if !(pseudo > 0.0) {
            return Err(Error::Parameter(format!("pseudo-count must be positive, got {pseudo}")));
        }
        self.alr_of_proportions(pseudo)
    }
}

/// Observations tied to a matrix-t prior on `η`: the collapsed form of any
/// model in the family.
#[derive(Debug, Clone)]
pub struct LtpModel<L = CountMatrix> {
    likelihood: L,
    prior: MatrixTParams,
    workspace: MattWorkspace,
}

impl<L: Likelihood> LtpModel<L> {
    pub fn new(likelihood: L, prior: MatrixTParams) -> Result<Self> {
        let (p, n) = likelihood.eta_shape();
        if prior.rows() != p || prior.cols() != n {
            return Err(Error::Dimension(format!(
                "prior is {}x{} but the observations need a {}x{} log-ratio matrix",
                prior.rows(),
                prior.cols(),
                p,
                n
            )));
        }
        let workspace = MattWorkspace::new(&prior)?;
        Ok(LtpModel { likelihood, prior, workspace })
    }

    pub fn likelihood(&self) -> &L {
        &self.likelihood
    }

    pub fn prior(&self) -> &MatrixTParams {
        &self.prior
    }

    pub fn workspace(&self) -> &MattWorkspace {
        &self.workspace
    }

    pub fn eta_shape(&self) -> (usize, usize) {
        self.likelihood.eta_shape()
    }

    /// `(υ + N + P - 1) / 2`.
    pub fn kernel_exponent(&self) -> f64 {
        self.workspace.kernel_exponent()
    }

    /// `-g(η) + (υ+N+P-1)/2 · log|S(η)|`. Drops the multinomial coefficient
    /// and the matrix-t normalizer.
    pub fn objective(&self, eta: &DMatrix<f64>) -> Result<f64> {
        let g = self.likelihood.log_lik(eta)?;
        Ok(-g + self.kernel_exponent() * self.workspace.log_det_s(eta)?)
    }

    pub fn objective_and_gradient(&self, eta: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let (g, dg) = self.likelihood.value_and_gradient(eta)?;
        let (ld, dld) = self.workspace.log_det_s_and_grad(eta)?;
        let c = self.kernel_exponent();
        Ok((-g + c * ld, dld * c - dg))
    }

    /// Hessian of [`LtpModel::objective`] with respect to `vec(η)`, symmetrized.
    /// Also returns the largest asymmetry seen before symmetrizing.
    pub fn objective_hessian(&self, eta: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
        let mut h = self.workspace.hess_log_det_s(eta)?;
        h.scale_mut(self.kernel_exponent());
        self.likelihood.hessian(eta)?.add_to(&mut h, -1.0);
        let asym = crate::linalg::max_asymmetry(&h);
        symmetrize(&mut h);
        Ok((h, asym))
    }

    /// Positive diagonal curvature estimate of the objective in `vec(η)`
    /// order: the likelihood information diagonal at `eta` plus the prior
    /// curvature at its mean, `2c·(K⁻¹)ᵢᵢ(A⁻¹)ⱼⱼ`. Used to precondition the
    /// mode search.
    pub fn curvature_diagonal(&self, eta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let hess = self.likelihood.hessian(eta)?;
        let (k_inv, a_inv) = (self.workspace.k_inv(), self.workspace.a_inv());
        let c = 2.0 * self.kernel_exponent();
        let (p, n) = self.eta_shape();
        Ok(DMatrix::from_fn(p, n, |i, j| c * k_inv[(i, i)] * a_inv[(j, j)] - hess.blocks[j][(i, i)]))
    }

    /// Normalized `log p(Y | η) + log T(η)`, with every constant included.
    pub fn full_log_joint(&self, eta: &DMatrix<f64>) -> Result<f64> {
        let g = self.likelihood.log_lik(eta)? + self.likelihood.log_constant();
        let ld = self.workspace.log_det_s(eta)?;
        Ok(g + self.workspace.log_normalizer() - self.kernel_exponent() * ld)
    }
}

/// Free-function form of [`LtpModel::objective`].
pub fn neg_log_collapsed_posterior<L: Likelihood>(eta: &DMatrix<f64>, model: &LtpModel<L>) -> Result<f64> {
    model.objective(eta)
}
