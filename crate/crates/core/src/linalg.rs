//! Small dense helpers shared by the distribution and model modules, plus the
//! large symmetric factorization used for the Laplace Hessian.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Chol = Cholesky<f64, Dyn>;

pub fn cholesky(m: &DMatrix<f64>, what: &'static str) -> Result<Chol> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{what} must be square, got {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NotPositiveDefinite(what));
    }
    Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite(what))
}

pub fn log_det_chol(chol: &Chol) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetrized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

pub fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    Ok(symmetrized(cholesky(m, what)?.inverse()))
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Square root `F` with `F Fᵀ = m` for a symmetric positive semi-definite
/// matrix: the lower Cholesky factor when it exists, otherwise an eigenvector
/// factor with negative round-off eigenvalues set to zero.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = Cholesky::new(m.clone()) {
        return chol.l();
    }
    let eig = SymmetricEigen::new(symmetrized(m.clone()));
    let mut f = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    f
}

pub fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Factorization of a large symmetric positive-definite matrix `H`.
///
/// Cholesky is attempted first. If it fails the matrix is eigendecomposed and
/// every eigenvalue below `floor_ratio * λ_max` is raised to that floor, so the
/// factor always represents a positive-definite matrix.
#[derive(Debug, Clone)]
pub enum SpdFactor {
    Cholesky { lower: faer::Mat<f64> },
    Eigen { vectors: DMatrix<f64>, values: Vec<f64> },
}

impl SpdFactor {
    /// Returns the factor and the number of clipped eigenvalues (zero when
    /// Cholesky succeeded).
    pub fn new(h: &DMatrix<f64>, floor_ratio: f64) -> Result<(Self, usize)> {
        let n = h.nrows();
        if h.iter().any(|x| !x.is_finite()) {
            return Err(Error::NotPositiveDefinite("Hessian (non-finite entries)"));
        }
        let view = faer::MatRef::from_column_major_slice(h.as_slice(), n, n);
        if let Ok(llt) = view.llt(faer::Side::Lower) {
            return Ok((SpdFactor::Cholesky { lower: llt.L().to_owned() }, 0));
        }
        let evd = view
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|_| Error::NotPositiveDefinite("Hessian (eigendecomposition did not converge)"))?;
        let u = evd.U();
        let s = evd.S().column_vector();
        let mut values: Vec<f64> = (0..n).map(|i| s[i]).collect();
        let lambda_max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(lambda_max > 0.0) {
            return Err(Error::NotPositiveDefinite("Hessian (no positive eigenvalue)"));
        }
        let floor = floor_ratio * lambda_max;
        let mut clipped = 0;
        for v in values.iter_mut() {
            if *v < floor {
                *v = floor;
                clipped += 1;
            }
        }
        let vectors = DMatrix::from_fn(n, n, |i, j| u[(i, j)]);
        Ok((SpdFactor::Eigen { vectors, values }, clipped))
    }

    pub fn dim(&self) -> usize {
        match self {
            SpdFactor::Cholesky { lower } => lower.nrows(),
            SpdFactor::Eigen { values, .. } => values.len(),
        }
    }

    /// Maps standard-normal columns `z` in place to columns with covariance
    /// `H⁻¹`: solves `Lᵀ x = z`, or `x = V Λ^{-1/2} z` for the eigen form.
    pub fn apply_inverse_sqrt(&self, z: &mut DMatrix<f64>) {
        assert_eq!(z.nrows(), self.dim());
        match self {
            SpdFactor::Cholesky { lower } => {
                let (n, c) = z.shape();
                let rhs = faer::MatMut::from_column_major_slice_mut(z.as_mut_slice(), n, c);
                lower.transpose().solve_upper_triangular_in_place(rhs);
            }
            SpdFactor::Eigen { vectors, values } => {
                for (i, v) in values.iter().enumerate() {
                    z.row_mut(i).scale_mut(1.0 / v.sqrt());
                }
                *z = vectors * &*z;
            }
        }
    }

    /// Dense `H⁻¹`. Intended for diagnostics and tests on small problems.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        match self {
            SpdFactor::Cholesky { lower } => {
                let mut x = DMatrix::<f64>::identity(n, n);
                let view = faer::MatMut::from_column_major_slice_mut(x.as_mut_slice(), n, n);
                lower.solve_lower_triangular_in_place(view);
                let view = faer::MatMut::from_column_major_slice_mut(x.as_mut_slice(), n, n);
                lower.transpose().solve_upper_triangular_in_place(view);
                symmetrized(x)
            }
            SpdFactor::Eigen { vectors, values } => {
                let mut scaled = vectors.clone();
                for (j, v) in values.iter().enumerate() {
                    scaled.column_mut(j).scale_mut(1.0 / v);
                }
                symmetrized(&scaled * vectors.transpose())
            }
        }
    }

    pub fn log_det(&self) -> f64 {
        match self {
            SpdFactor::Cholesky { lower } => 2.0 * (0..lower.nrows()).map(|i| lower[(i, i)].ln()).sum::<f64>(),
            SpdFactor::Eigen { values, .. } => values.iter().map(|v| v.ln()).sum(),
        }
    }
}
