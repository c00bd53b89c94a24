//! Multinomial observations parameterized by additive log-ratios.
//!
//! Category `D` is the reference: `η_ij = log(π_ij / π_Dj)` for `i < D`.
//! The log-likelihood omits the multinomial coefficient, which does not depend
//! on `η`; [`log_multinomial_coefficient`] supplies it when a normalized
//! density is needed.

use nalgebra::DMatrix;
use statrs::function::factorial::ln_factorial;

use crate::error::{check_dims, Error, Result};

/// Nonnegative count table, categories in rows and samples in columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    counts: DMatrix<u64>,
    as_f64: DMatrix<f64>,
    totals: Vec<u64>,
}

impl CountMatrix {
    pub fn new(counts: DMatrix<u64>) -> Result<Self> {
        if counts.nrows() < 2 {
            return Err(Error::Parameter(format!("need at least 2 categories, got {}", counts.nrows())));
        }
        if counts.ncols() == 0 {
            return Err(Error::Parameter("count matrix has no samples".into()));
        }
        let totals = counts.column_iter().map(|c| c.iter().sum()).collect();
        let as_f64 = counts.map(|c| c as f64);
        Ok(CountMatrix { counts, as_f64, totals })
    }

    /// Build from real-valued counts, which must be nonnegative integers.
    pub fn from_f64(values: &DMatrix<f64>) -> Result<Self> {
        let mut counts = DMatrix::<u64>::zeros(values.nrows(), values.ncols());
        for (dst, &v) in counts.iter_mut().zip(values.iter()) {
            if !(v >= 0.0) || v.fract() != 0.0 || v > u64::MAX as f64 {
                return Err(Error::Domain(format!("counts must be nonnegative integers, found {v}")));
            }
            *dst = v as u64;
        }
        Self::new(counts)
    }

    /// Number of categories `D`.
    pub fn categories(&self) -> usize {
        self.counts.nrows()
    }

    /// Number of samples `N`.
    pub fn samples(&self) -> usize {
        self.counts.ncols()
    }

    /// Dimension of the log-ratio space, `D - 1`.
    pub fn log_ratio_dim(&self) -> usize {
        self.counts.nrows() - 1
    }

    pub fn counts(&self) -> &DMatrix<u64> {
        &self.counts
    }

    pub fn counts_f64(&self) -> &DMatrix<f64> {
        &self.as_f64
    }

    pub fn totals(&self) -> &[u64] {
        &self.totals
    }

    /// ALR coordinates of the column proportions of `Y + pseudo`.
    pub fn alr_of_proportions(&self, pseudo: f64) -> Result<DMatrix<f64>> {
        let shifted = self.as_f64.add_scalar(pseudo);
        let mut props = shifted.clone();
        for mut col in props.column_iter_mut() {
            let s: f64 = col.sum();
            col /= s;
        }
        alr_forward(&props)
    }

    fn check_eta(&self, eta: &DMatrix<f64>) -> Result<()> {
        check_dims(eta.nrows() == self.log_ratio_dim() && eta.ncols() == self.samples(), || {
            format!("eta is {}x{}, counts need {}x{}", eta.nrows(), eta.ncols(), self.log_ratio_dim(), self.samples())
        })
    }
}

/// `log(1 + Σ_i e^{x_i})` and the shift used, computed stably.
fn log1p_sum_exp(col: &[f64]) -> (f64, f64) {
    let m = col.iter().cloned().fold(0.0_f64, f64::max);
    let mut s = (-m).exp();
    for &x in col {
        s += (x - m).exp();
    }
    (m + s.ln(), m)
}

/// `ρ_i = e^{x_i} / (1 + Σ e^{x})` for one column, plus the log normalizer.
fn softmax_numerators(col: &[f64], out: &mut [f64]) -> f64 {
    let (lse, _) = log1p_sum_exp(col);
    for (o, &x) in out.iter_mut().zip(col) {
        *o = (x - lse).exp();
    }
    lse
}

/// Inverse ALR: maps each `(D-1)`-vector column to the `D`-simplex.
pub fn alr_inverse(eta: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, n) = eta.shape();
    let mut pi = DMatrix::zeros(p + 1, n);
    for j in 0..n {
        let col = eta.column(j);
        let (lse, _) = log1p_sum_exp(col.as_slice());
        for i in 0..p {
            pi[(i, j)] = (eta[(i, j)] - lse).exp();
        }
        pi[(p, j)] = (-lse).exp();
    }
    pi
}

/// ALR transform with the last row as reference.
pub fn alr_forward(pi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if pi.nrows() < 2 {
        return Err(Error::Parameter("alr needs at least 2 parts".into()));
    }
    if let Some(bad) = pi.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("alr needs strictly positive parts, found {bad}")));
    }
    let p = pi.nrows() - 1;
    Ok(DMatrix::from_fn(p, pi.ncols(), |i, j| (pi[(i, j)] / pi[(p, j)]).ln()))
}

/// Maps ALR coordinates (reference last) to CLR coordinates: append a zero
/// row, then center each column.
pub fn clr_from_alr(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, n) = m.shape();
    let d = (p + 1) as f64;
    let mut out = DMatrix::zeros(p + 1, n);
    for j in 0..n {
        let mean = m.column(j).sum() / d;
        for i in 0..p {
            out[(i, j)] = m[(i, j)] - mean;
        }
        out[(p, j)] = -mean;
    }
    out
}

/// The `D×(D-1)` matrix `V` with `clr = V · alr`.
pub fn alr_to_clr_matrix(p: usize) -> DMatrix<f64> {
    clr_from_alr(&DMatrix::identity(p, p))
}

/// CLR covariance `V Σ Vᵀ` of an ALR covariance `Σ`.
pub fn clr_covariance_from_alr(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let v = alr_to_clr_matrix(sigma.nrows());
    &v * sigma * v.transpose()
}

/// `g(η) = Σ_j (Σ_i η_ij Y_ij - n_j log(1 + Σ_i e^{η_ij}))`.
pub fn multinom_log_lik(y: &CountMatrix, eta: &DMatrix<f64>) -> Result<f64> {
    y.check_eta(eta)?;
    let p = y.log_ratio_dim();
    let mut g = 0.0;
    for j in 0..y.samples() {
        let n = y.totals[j];
        if n == 0 {
            continue;
        }
        let col = eta.column(j);
        for i in 0..p {
            g += col[i] * y.as_f64[(i, j)];
        }
        g -= n as f64 * log1p_sum_exp(col.as_slice()).0;
    }
    Ok(g)
}

/// Gradient of [`multinom_log_lik`], entry `(i, j)` being `Y_ij - n_j ρ_ij`.
pub fn multinom_gradient(y: &CountMatrix, eta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(multinom_value_and_gradient(y, eta)?.1)
}

pub fn multinom_value_and_gradient(y: &CountMatrix, eta: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    y.check_eta(eta)?;
    let p = y.log_ratio_dim();
    let mut grad = DMatrix::zeros(p, y.samples());
    let mut rho = vec![0.0; p];
    let mut g = 0.0;
    for j in 0..y.samples() {
        let n = y.totals[j] as f64;
        if n == 0.0 {
            continue;
        }
        let col = eta.column(j);
        let lse = softmax_numerators(col.as_slice(), &mut rho);
        for i in 0..p {
            let yij = y.as_f64[(i, j)];
            g += col[i] * yij;
            grad[(i, j)] = yij - n * rho[i];
        }
        g -= n * lse;
    }
    Ok((g, grad))
}

/// Block-diagonal Hessian of `g`; block `j` is `n_j(ρ_j ρ_jᵀ - diag ρ_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockHessian {
    pub blocks: Vec<DMatrix<f64>>,
}

impl BlockHessian {
    pub fn block_size(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.nrows())
    }

    pub fn dim(&self) -> usize {
        self.block_size() * self.blocks.len()
    }

    /// `out += scale · blockdiag(W)` without forming the dense block matrix.
    pub fn add_to(&self, out: &mut DMatrix<f64>, scale: f64) {
        let b = self.block_size();
        assert_eq!(out.shape(), (self.dim(), self.dim()));
        for (j, w) in self.blocks.iter().enumerate() {
            let mut view = out.view_mut((j * b, j * b), (b, b));
            view += w * scale;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        self.add_to(&mut out, 1.0);
        out
    }
}

pub fn multinom_hessian(y: &CountMatrix, eta: &DMatrix<f64>) -> Result<BlockHessian> {
    y.check_eta(eta)?;
    let p = y.log_ratio_dim();
    let mut rho = vec![0.0; p];
    let mut blocks = Vec::with_capacity(y.samples());
    for j in 0..y.samples() {
        let n = y.totals[j] as f64;
        let mut w = DMatrix::zeros(p, p);
        if n > 0.0 {
            softmax_numerators(eta.column(j).as_slice(), &mut rho);
            for c in 0..p {
                for r in 0..p {
                    w[(r, c)] = n * rho[r] * rho[c];
                }
                w[(c, c)] -= n * rho[c];
            }
        }
        blocks.push(w);
    }
    Ok(BlockHessian { blocks })
}

/// `Σ_j log(n_j! / Π_i Y_ij!)`, the constant dropped from [`multinom_log_lik`].
pub fn log_multinomial_coefficient(y: &CountMatrix) -> f64 {
    let mut total = 0.0;
    for (j, col) in y.counts.column_iter().enumerate() {
        total += ln_factorial(y.totals[j]);
        for &c in col.iter() {
            total -= ln_factorial(c);
        }
    }
    total
}
