//! Derivatives of `log|S|` with `S = I_P + K⁻¹(η - B)A⁻¹(η - B)ᵀ`, the only
//! `η`-dependent term of the matrix-t log density.
//!
//! All derivatives are with respect to `vec(η)` in column-major order, which
//! is also the storage order of `DMatrix`, so a gradient is returned as a
//! `P×N` matrix whose slice is the gradient vector.

use nalgebra::{DMatrix, Dyn, LU};

use crate::error::{check_dims, Error, Result};
use crate::linalg::{cholesky, symmetrized, Chol};
use crate::matvar::MatrixTParams;

/// Which of the two Sylvester-equivalent determinants to work with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SylvesterForm {
    /// `S = I_P + K⁻¹ E A⁻¹ Eᵀ` (`P×P`).
    Standard,
    /// `S = I_N + A⁻¹ Eᵀ K⁻¹ E` (`N×N`).
    Dual,
}

impl SylvesterForm {
    /// The cheaper form for a `P×N` problem.
    pub fn for_shape(p: usize, n: usize) -> Self {
        if n < p {
            SylvesterForm::Dual
        } else {
            SylvesterForm::Standard
        }
    }
}

/// Cached factorizations of `K` and `A` for repeated evaluation at many `η`.
#[derive(Debug, Clone)]
pub struct MattWorkspace {
    upsilon: f64,
    mean: DMatrix<f64>,
    row_chol: Chol,
    col_chol: Chol,
    k_inv: DMatrix<f64>,
    a_inv: DMatrix<f64>,
}

/// `S`, `C` and `R` at one `η`, in either form.
///
/// Standard: `C = A⁻¹Eᵀ` (`N×P`), `R = S⁻¹K⁻¹`.
/// Dual: `C = K⁻¹E` (`P×N`), `R = S⁻¹A⁻¹`.
pub struct MattState {
    pub form: SylvesterForm,
    pub s: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub log_det_s: f64,
}

impl MattWorkspace {
    pub fn new(params: &MatrixTParams) -> Result<Self> {
        let row_chol = cholesky(&params.row_scale, "matrix-t row scale K")?;
        let col_chol = cholesky(&params.col_scale, "matrix-t column scale A")?;
        let k_inv = symmetrized(row_chol.inverse());
        let a_inv = symmetrized(col_chol.inverse());
        Ok(MattWorkspace { upsilon: params.upsilon, mean: params.mean.clone(), row_chol, col_chol, k_inv, a_inv })
    }

    pub fn rows(&self) -> usize {
        self.mean.nrows()
    }

    pub fn cols(&self) -> usize {
        self.mean.ncols()
    }

    pub fn upsilon(&self) -> f64 {
        self.upsilon
    }

    pub fn mean(&self) -> &DMatrix<f64> {
        &self.mean
    }

    pub fn row_chol(&self) -> &Chol {
        &self.row_chol
    }

    pub fn col_chol(&self) -> &Chol {
        &self.col_chol
    }

    pub fn k_inv(&self) -> &DMatrix<f64> {
        &self.k_inv
    }

    pub fn a_inv(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    pub fn kernel_exponent(&self) -> f64 {
        0.5 * (self.upsilon + (self.rows() + self.cols()) as f64 - 1.0)
    }

    fn residual(&self, eta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dims(eta.shape() == self.mean.shape(), || {
            format!("eta is {:?}, matrix-t mean is {:?}", eta.shape(), self.mean.shape())
        })?;
        Ok(eta - &self.mean)
    }

    pub fn state(&self, eta: &DMatrix<f64>, form: SylvesterForm) -> Result<MattState> {
        let e = self.residual(eta)?;
        let (s, c, small_inv) = match form {
            SylvesterForm::Standard => {
                let c = self.col_chol.solve(&e.transpose());
                let s = DMatrix::identity(self.rows(), self.rows()) + self.row_chol.solve(&(&e * &c));
                (s, c, &self.k_inv)
            }
            SylvesterForm::Dual => {
                let c = self.row_chol.solve(&e);
                let s = DMatrix::identity(self.cols(), self.cols()) + self.col_chol.solve(&(e.transpose() * &c));
                (s, c, &self.a_inv)
            }
        };
        let lu = LU::<f64, Dyn, Dyn>::new(s.clone());
        let log_det_s = lu_log_abs_det(&lu);
        let r = lu.solve(small_inv).ok_or(Error::Singular("matrix-t kernel matrix S"))?;
        Ok(MattState { form, s, c, r, log_det_s })
    }

    /// `log|S|`, evaluated in the smaller of the two dimensions.
    pub fn log_det_s(&self, eta: &DMatrix<f64>) -> Result<f64> {
        self.log_det_s_form(eta, SylvesterForm::for_shape(self.rows(), self.cols()))
    }

    pub fn log_det_s_form(&self, eta: &DMatrix<f64>, form: SylvesterForm) -> Result<f64> {
        let e = self.residual(eta)?;
        let s = match form {
            SylvesterForm::Standard => {
                let c = self.col_chol.solve(&e.transpose());
                DMatrix::identity(self.rows(), self.rows()) + self.row_chol.solve(&(&e * c))
            }
            SylvesterForm::Dual => {
                let c = self.row_chol.solve(&e);
                DMatrix::identity(self.cols(), self.cols()) + self.col_chol.solve(&(e.transpose() * c))
            }
        };
        Ok(lu_log_abs_det(&LU::new(s)))
    }

    /// Gradient of `log|S|`; uses the dual form when `N < P`.
    pub fn grad_log_det_s(&self, eta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.grad_log_det_s_form(eta, SylvesterForm::for_shape(self.rows(), self.cols()))
    }

    pub fn grad_log_det_s_form(&self, eta: &DMatrix<f64>, form: SylvesterForm) -> Result<DMatrix<f64>> {
        let st = self.state(eta, form)?;
        Ok(gradient_from_state(&st))
    }

    /// Value and gradient in a single pass.
    pub fn log_det_s_and_grad(&self, eta: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let st = self.state(eta, SylvesterForm::for_shape(self.rows(), self.cols()))?;
        Ok((st.log_det_s, gradient_from_state(&st)))
    }

    /// Dense `PN×PN` Hessian of `log|S|`, always from the standard form:
    ///
    /// `(A⁻¹ ⊗ (R+Rᵀ)) - (L + Lᵀ) - T_{N,P}[(RCᵀ ⊗ CRᵀ) + (RᵀCᵀ ⊗ CR)]`
    /// with `L = CRCᵀ ⊗ Rᵀ`.
    pub fn hess_log_det_s(&self, eta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let st = self.state(eta, SylvesterForm::Standard)?;
        let (p, n) = (self.rows(), self.cols());
        let pn = p * n;
        let r = &st.r;
        let c = &st.c;
        let rs = r + r.transpose();
        let crct = c * r * c.transpose();
        let a_inv = &self.a_inv;

        // The transposed bracket is folded in entrywise:
        // (T M)[(p1,n1),(p2,n2)] = RCᵀ[p1,n2]·CRᵀ[n1,p2] + RᵀCᵀ[p1,n2]·CR[n1,p2].
        let rct = r * c.transpose();
        let crt = c * r.transpose();
        let rtct = r.transpose() * c.transpose();
        let cr = c * r;
        let mut h = DMatrix::<f64>::zeros(pn, pn);
        for n2 in 0..n {
            for p2 in 0..p {
                let col = n2 * p + p2;
                let out = &mut h.as_mut_slice()[col * pn..(col + 1) * pn];
                for n1 in 0..n {
                    let a = a_inv[(n1, n2)];
                    let l = crct[(n1, n2)];
                    let lt = crct[(n2, n1)];
                    let u = crt[(n1, p2)];
                    let v = cr[(n1, p2)];
                    let base = n1 * p;
                    for p1 in 0..p {
                        out[base + p1] = a * rs[(p1, p2)]
                            - l * r[(p2, p1)]
                            - lt * r[(p1, p2)]
                            - rct[(p1, n2)] * u
                            - rtct[(p1, n2)] * v;
                    }
                }
            }
        }
        Ok(h)
    }
}

fn gradient_from_state(st: &MattState) -> DMatrix<f64> {
    let rs = &st.r + st.r.transpose();
    match st.form {
        SylvesterForm::Standard => rs * st.c.transpose(),
        SylvesterForm::Dual => &st.c * rs,
    }
}

fn lu_log_abs_det(lu: &LU<f64, Dyn, Dyn>) -> f64 {
    lu.u().diagonal().iter().map(|d| d.abs().ln()).sum()
}

/// Row index map of `T_{m,n}`: output row `i·n + j` is input row `j·m + i`.
#[inline]
fn vec_transpose_source_row(out_row: usize, m: usize, n: usize) -> usize {
    let i = out_row / n;
    let j = out_row % n;
    j * m + i
}

/// `out += alpha · T_{m,n} x`, applied by row relabeling.
pub fn axpy_vec_transposed_rows(alpha: f64, x: &DMatrix<f64>, m: usize, n: usize, out: &mut DMatrix<f64>) {
    assert_eq!(x.nrows(), m * n);
    assert_eq!(out.shape(), x.shape());
    let rows = x.nrows();
    for col in 0..x.ncols() {
        let src = &x.as_slice()[col * rows..(col + 1) * rows];
        let dst = &mut out.as_mut_slice()[col * rows..(col + 1) * rows];
        for (row, d) in dst.iter_mut().enumerate() {
            *d += alpha * src[vec_transpose_source_row(row, m, n)];
        }
    }
}

/// `T_{m,n} X` for an `mn×c` matrix `X`, where `T_{m,n} vec(A) = vec(Aᵀ)` for
/// any `m×n` matrix `A`. No permutation matrix is formed.
pub fn vec_transpose_rows(x: &DMatrix<f64>, m: usize, n: usize) -> Result<DMatrix<f64>> {
    if x.nrows() != m * n {
        return Err(Error::Parameter(format!("vec-transpose needs {}x{} = {} rows, got {}", m, n, m * n, x.nrows())));
    }
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    axpy_vec_transposed_rows(1.0, x, m, n, &mut out);
    Ok(out)
}

pub fn log_det_s(eta: &DMatrix<f64>, params: &MatrixTParams) -> Result<f64> {
    MattWorkspace::new(params)?.log_det_s(eta)
}

pub fn grad_log_det_s(eta: &DMatrix<f64>, params: &MatrixTParams) -> Result<DMatrix<f64>> {
    MattWorkspace::new(params)?.grad_log_det_s(eta)
}

pub fn hess_log_det_s(eta: &DMatrix<f64>, params: &MatrixTParams) -> Result<DMatrix<f64>> {
    MattWorkspace::new(params)?.hess_log_det_s(eta)
}
