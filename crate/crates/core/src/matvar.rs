//! Matrix-normal, inverse-Wishart and matrix-t distributions.
//!
//! Inverse-Wishart uses the density `p(Σ) ∝ |Σ|^{-(P+υ+1)/2} exp(-½ tr(Ξ Σ⁻¹))`,
//! so `E[Σ] = Ξ / (υ - P - 1)`.

use nalgebra::DMatrix;
use rand::{Rng, RngExt};
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_dims, Error, Result};
use crate::linalg::{cholesky, log_det_chol, standard_normal_matrix, symmetrize};
use crate::mattcalc::MattWorkspace;
use crate::rng::RngSeed;

#[derive(Debug, Clone)]
pub struct MatrixNormalParams {
    mean: DMatrix<f64>,
    row_cov: DMatrix<f64>,
    col_cov: DMatrix<f64>,
    row_factor: DMatrix<f64>,
    col_factor: DMatrix<f64>,
}

impl MatrixNormalParams {
    /// `vec(Y) ~ N(vec(M), V ⊗ U)` with `U` the row and `V` the column covariance.
    pub fn new(mean: DMatrix<f64>, row_cov: DMatrix<f64>, col_cov: DMatrix<f64>) -> Result<Self> {
        let (m, n) = mean.shape();
        check_dims(row_cov.shape() == (m, m), || {
            format!("row covariance is {:?}, mean has {m} rows", row_cov.shape())
        })?;
        check_dims(col_cov.shape() == (n, n), || {
            format!("column covariance is {:?}, mean has {n} columns", col_cov.shape())
        })?;
        let row_factor = cholesky(&row_cov, "matrix-normal row covariance U")?.l();
        let col_factor = cholesky(&col_cov, "matrix-normal column covariance V")?.l();
        Ok(MatrixNormalParams { mean, row_cov, col_cov, row_factor, col_factor })
    }

    pub fn mean(&self) -> &DMatrix<f64> {
        &self.mean
    }

    pub fn row_cov(&self) -> &DMatrix<f64> {
        &self.row_cov
    }

    pub fn col_cov(&self) -> &DMatrix<f64> {
        &self.col_cov
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        sample_matrix_normal_factored(&self.mean, &self.row_factor, &self.col_factor, rng)
    }
}

/// `M + F_U Z F_Vᵀ` for any square roots `F_U F_Uᵀ = U`, `F_V F_Vᵀ = V`.
pub fn sample_matrix_normal_factored<R: Rng + ?Sized>(
    mean: &DMatrix<f64>,
    row_factor: &DMatrix<f64>,
    col_factor: &DMatrix<f64>,
    rng: &mut R,
) -> DMatrix<f64> {
    let z = standard_normal_matrix(mean.nrows(), mean.ncols(), rng);
    mean + row_factor * z * col_factor.transpose()
}

pub fn sample_matrix_normal(params: &MatrixNormalParams, seed: RngSeed) -> DMatrix<f64> {
    params.sample(&mut seed.rng())
}

#[derive(Debug, Clone)]
pub struct InverseWishartParams {
    scale: DMatrix<f64>,
    upsilon: f64,
}

impl InverseWishartParams {
    pub fn new(scale: DMatrix<f64>, upsilon: f64) -> Result<Self> {
        check_dims(scale.is_square(), || format!("inverse-Wishart scale is {:?}", scale.shape()))?;
        if !(upsilon > 0.0) || !upsilon.is_finite() {
            return Err(Error::Parameter(format!("inverse-Wishart degrees of freedom must be > 0, got {upsilon}")));
        }
        Ok(InverseWishartParams { scale, upsilon })
    }

    pub fn dim(&self) -> usize {
        self.scale.nrows()
    }

    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }

    pub fn upsilon(&self) -> f64 {
        self.upsilon
    }

    pub fn mean(&self) -> Option<DMatrix<f64>> {
        let denom = self.upsilon - self.dim() as f64 - 1.0;
        (denom > 0.0).then(|| &self.scale / denom)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DMatrix<f64>> {
        let p = self.dim();
        if !(self.upsilon > p as f64 - 1.0) {
            return Err(Error::Parameter(format!(
                "inverse-Wishart sampling needs upsilon > P - 1 = {}, got {}",
                p as f64 - 1.0,
                self.upsilon
            )));
        }
        let scale_chol = cholesky(&self.scale, "inverse-Wishart scale Xi")?;
        Ok(sample_inverse_wishart_chol(&scale_chol.l(), self.upsilon, rng))
    }
}

/// Bartlett draw given the lower Cholesky factor `L` of `Ξ`.
///
/// With `A` the Bartlett factor of a `W(I, υ)` draw, `Σ⁻¹ = L⁻ᵀ A Aᵀ L⁻¹` is
/// Wishart with scale `Ξ⁻¹`, hence `Σ = Tᵀ T` with `T = A⁻¹ Lᵀ`, which only
/// needs one triangular solve.
pub(crate) fn sample_inverse_wishart_chol<R: Rng + ?Sized>(
    scale_lower: &DMatrix<f64>,
    upsilon: f64,
    rng: &mut R,
) -> DMatrix<f64> {
    let p = scale_lower.nrows();
    let mut bartlett = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(upsilon - i as f64).expect("degrees of freedom checked by caller");
        bartlett[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            bartlett[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let t = bartlett.solve_lower_triangular(&scale_lower.transpose()).expect("Bartlett diagonal is strictly positive");
    let mut sigma = t.transpose() * t;
    symmetrize(&mut sigma);
    sigma
}

pub fn sample_inverse_wishart(params: &InverseWishartParams, seed: RngSeed) -> Result<DMatrix<f64>> {
    params.sample(&mut seed.rng())
}

/// `η ~ T(υ, B, K, A)`: `P×N` matrix-t with row scale `K` and column scale `A`.
#[derive(Debug, Clone)]
pub struct MatrixTParams {
    pub upsilon: f64,
    pub mean: DMatrix<f64>,
    pub row_scale: DMatrix<f64>,
    pub col_scale: DMatrix<f64>,
}

impl MatrixTParams {
    pub fn new(upsilon: f64, mean: DMatrix<f64>, row_scale: DMatrix<f64>, col_scale: DMatrix<f64>) -> Result<Self> {
        let (p, n) = mean.shape();
        if !(upsilon > 0.0) || !upsilon.is_finite() {
            return Err(Error::Parameter(format!("matrix-t degrees of freedom must be > 0, got {upsilon}")));
        }
        check_dims(row_scale.shape() == (p, p), || format!("K is {:?}, B is {p}x{n}", row_scale.shape()))?;
        check_dims(col_scale.shape() == (n, n), || format!("A is {:?}, B is {p}x{n}", col_scale.shape()))?;
        Ok(MatrixTParams { upsilon, mean, row_scale, col_scale })
    }

    pub fn rows(&self) -> usize {
        self.mean.nrows()
    }

    pub fn cols(&self) -> usize {
        self.mean.ncols()
    }

    /// `(υ + N + P - 1) / 2`, the power on `|S|` in the log kernel.
    pub fn kernel_exponent(&self) -> f64 {
        0.5 * (self.upsilon + (self.cols() + self.rows()) as f64 - 1.0)
    }

    /// Constructive draw: `Σ ~ IW(K, υ)`, `X ~ N(0, I, A)`, return `B + chol(Σ) X`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DMatrix<f64>> {
        let iw = InverseWishartParams::new(self.row_scale.clone(), self.upsilon)?;
        let sigma = iw.sample(rng)?;
        let sigma_factor = cholesky(&sigma, "inverse-Wishart draw")?.l();
        let col_factor = cholesky(&self.col_scale, "matrix-t column scale A")?.l();
        let x = standard_normal_matrix(self.rows(), self.cols(), rng) * col_factor.transpose();
        Ok(&self.mean + sigma_factor * x)
    }
}

pub fn sample_matrix_t(params: &MatrixTParams, seed: RngSeed) -> Result<DMatrix<f64>> {
    params.sample(&mut seed.rng())
}

/// `log Γ_p(a) = p(p-1)/4 log π + Σ_{j=1}^{p} log Γ(a + (1 - j)/2)`.
pub fn ln_multivariate_gamma(p: usize, a: f64) -> f64 {
    let pf = p as f64;
    pf * (pf - 1.0) / 4.0 * std::f64::consts::PI.ln()
        + (1..=p).map(|j| ln_gamma(a + (1.0 - j as f64) / 2.0)).sum::<f64>()
}

/// Full matrix-t log density including the multivariate-gamma normalizer.
pub fn log_density_matrix_t(eta: &DMatrix<f64>, params: &MatrixTParams) -> Result<f64> {
    let ws = MattWorkspace::new(params)?;
    let log_det_s = ws.log_det_s(eta)?;
    Ok(ws.log_normalizer() - params.kernel_exponent() * log_det_s)
}

impl MattWorkspace {
    /// Every term of the matrix-t log density that does not depend on `η`.
    pub fn log_normalizer(&self) -> f64 {
        let p = self.rows();
        let n = self.cols();
        let upsilon = self.upsilon();
        ln_multivariate_gamma(p, 0.5 * (upsilon + (n + p) as f64 - 1.0))
            - ln_multivariate_gamma(p, 0.5 * (upsilon + p as f64 - 1.0))
            - 0.5 * (n * p) as f64 * std::f64::consts::PI.ln()
            - 0.5 * n as f64 * log_det_chol(self.row_chol())
            - 0.5 * p as f64 * log_det_chol(self.col_chol())
    }
}
