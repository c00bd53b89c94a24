//! Generalized multinomial logistic-normal linear models:
//!
//! ```text
//! η ~ N(ΛX, Σ, I_N),   Λ ~ N(Θ, Σ, Γ),   Σ ~ IW(Ξ, υ)
//! ```
//!
//! Integrating out `(Λ, Σ)` leaves `η ~ T(υ, ΘX, Ξ, I_N + XᵀΓX)`; given `η`
//! the pair has a conjugate matrix-normal inverse-Wishart posterior.

use nalgebra::DMatrix;
use rand::rngs::ChaCha8Rng;
use rand::Rng;

use crate::engine::Uncollapser;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, standard_normal_matrix, symmetrize, symmetrized, Chol};
use crate::matvar::{sample_inverse_wishart_chol, MatrixTParams};

#[derive(Debug, Clone, PartialEq)]
pub struct GmclHyper {
    /// Prior mean of `Λ` (`P×Q`).
    pub theta: DMatrix<f64>,
    /// Column covariance of `Λ` (`Q×Q`).
    pub gamma: DMatrix<f64>,
    /// Inverse-Wishart scale (`P×P`).
    pub xi: DMatrix<f64>,
    pub upsilon: f64,
}

impl GmclHyper {
    pub fn new(theta: DMatrix<f64>, gamma: DMatrix<f64>, xi: DMatrix<f64>, upsilon: f64) -> Result<Self> {
        let (p, q) = theta.shape();
        if gamma.shape() != (q, q) {
            return Err(Error::Parameter(format!("Gamma must be {q}x{q}, got {:?}", gamma.shape())));
        }
        if xi.shape() != (p, p) {
            return Err(Error::Parameter(format!("Xi must be {p}x{p}, got {:?}", xi.shape())));
        }
        if !(upsilon > p as f64 - 1.0) {
            return Err(Error::Parameter(format!("upsilon must exceed P - 1 = {}, got {upsilon}", p as f64 - 1.0)));
        }
        cholesky(&gamma, "Gamma")?;
        cholesky(&xi, "Xi")?;
        Ok(GmclHyper { theta, gamma, xi, upsilon })
    }

    pub fn p(&self) -> usize {
        self.theta.nrows()
    }

    pub fn q(&self) -> usize {
        self.theta.ncols()
    }
}

fn check_design(hyper: &GmclHyper, x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() != hyper.q() {
        return Err(Error::Parameter(format!("X has {} rows but Theta has {} columns", x.nrows(), hyper.q())));
    }
    Ok(())
}

/// Matrix-t parameters of the marginal of `η`: `(υ, ΘX, Ξ, I_N + XᵀΓX)`.
pub fn collapse_gmcl(hyper: &GmclHyper, x: &DMatrix<f64>) -> Result<MatrixTParams> {
    check_design(hyper, x)?;
    let n = x.ncols();
    let a = symmetrized(DMatrix::identity(n, n) + x.transpose() * &hyper.gamma * x);
    MatrixTParams::new(hyper.upsilon, &hyper.theta * x, hyper.xi.clone(), a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmclPosteriorParams {
    pub upsilon_n: f64,
    pub gamma_n: DMatrix<f64>,
    pub lambda_n: DMatrix<f64>,
    pub xi_n: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmclDraw {
    pub lambda: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

/// Conditional sampler `p(Λ, Σ | η)` with everything that does not depend on
/// `η` computed once.
#[derive(Debug, Clone)]
pub struct GmclUncollapser {
    hyper: GmclHyper,
    x: DMatrix<f64>,
    gamma_inv: DMatrix<f64>,
    theta_gamma_inv: DMatrix<f64>,
    gamma_n: DMatrix<f64>,
    gamma_n_lower: DMatrix<f64>,
}

impl GmclUncollapser {
    pub fn new(hyper: GmclHyper, x: DMatrix<f64>) -> Result<Self> {
        check_design(&hyper, &x)?;
        let gamma_inv = symmetrized(cholesky(&hyper.gamma, "Gamma")?.inverse());
        let precision = symmetrized(&x * x.transpose() + &gamma_inv);
        let gamma_n = symmetrized(cholesky(&precision, "XXᵀ + Γ⁻¹")?.inverse());
        let gamma_n_lower = cholesky(&gamma_n, "Gamma_N")?.l();
        let theta_gamma_inv = &hyper.theta * &gamma_inv;
        Ok(GmclUncollapser { hyper, x, gamma_inv, theta_gamma_inv, gamma_n, gamma_n_lower })
    }

    pub fn hyper(&self) -> &GmclHyper {
        &self.hyper
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn posterior_params(&self, eta: &DMatrix<f64>) -> Result<GmclPosteriorParams> {
        if eta.shape() != (self.hyper.p(), self.x.ncols()) {
            return Err(Error::Parameter(format!(
                "eta is {:?}, expected {}x{}",
                eta.shape(),
                self.hyper.p(),
                self.x.ncols()
            )));
        }
        let lambda_n = (eta * self.x.transpose() + &self.theta_gamma_inv) * &self.gamma_n;
        let resid = eta - &lambda_n * &self.x;
        let shift = &lambda_n - &self.hyper.theta;
        let mut xi_n = &self.hyper.xi + &resid * resid.transpose() + &shift * &self.gamma_inv * shift.transpose();
        symmetrize(&mut xi_n);
        Ok(GmclPosteriorParams {
            upsilon_n: self.hyper.upsilon + self.x.ncols() as f64,
            gamma_n: self.gamma_n.clone(),
            lambda_n,
            xi_n,
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, eta: &DMatrix<f64>, rng: &mut R) -> Result<GmclDraw> {
        let post = self.posterior_params(eta)?;
        let xi_chol: Chol = cholesky(&post.xi_n, "Xi_N")?;
        let sigma = sample_inverse_wishart_chol(&xi_chol.l(), post.upsilon_n, rng);
        let sigma_lower = cholesky(&sigma, "Sigma draw")?.l();
        let z = standard_normal_matrix(self.hyper.p(), self.hyper.q(), rng);
        let lambda = post.lambda_n + sigma_lower * z * self.gamma_n_lower.transpose();
        Ok(GmclDraw { lambda, sigma })
    }

    /// `(Λ_N, Ξ_N / (υ_N - P - 1))`, the conditional means.
    pub fn point(&self, eta: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let post = self.posterior_params(eta)?;
        let denom = post.upsilon_n - self.hyper.p() as f64 - 1.0;
        if !(denom > 0.0) {
            return Err(Error::Parameter(format!(
                "posterior mean of Sigma needs upsilon_N > P + 1, got upsilon_N = {}",
                post.upsilon_n
            )));
        }
        Ok((post.lambda_n, post.xi_n / denom))
    }
}

impl Uncollapser for GmclUncollapser {
    type Draw = GmclDraw;

    fn uncollapse(&self, eta: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Result<GmclDraw> {
        self.draw(eta, rng)
    }
}

/// One draw of `(Λ, Σ)` given `η`. Build a [`GmclUncollapser`] instead when
/// drawing repeatedly.
pub fn uncollapse_gmcl<R: Rng + ?Sized>(
    eta: &DMatrix<f64>,
    x: &DMatrix<f64>,
    hyper: &GmclHyper,
    rng: &mut R,
) -> Result<GmclDraw> {
    GmclUncollapser::new(hyper.clone(), x.clone())?.draw(eta, rng)
}

pub fn uncollapse_point_gmcl(
    eta_hat: &DMatrix<f64>,
    x: &DMatrix<f64>,
    hyper: &GmclHyper,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    GmclUncollapser::new(hyper.clone(), x.clone())?.point(eta_hat)
}
