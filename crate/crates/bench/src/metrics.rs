use mlnltp::gmcl::GmclHyper;
use nalgebra::DMatrix;

use crate::error::{BenchError, Result};

fn rmse(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(BenchError::Input(format!("{what}: shapes {:?} and {:?} differ", a.shape(), b.shape())));
    }
    if a.is_empty() {
        return Err(BenchError::Input(format!("{what}: empty matrices")));
    }
    Ok(((a - b).norm_squared() / a.len() as f64).sqrt())
}

/// Root mean squared error of a `Λ` point estimate.
pub fn rmse_lambda(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    rmse(estimate, truth, "rmse_lambda")
}

/// Root mean squared error between per-entry posterior standard deviations.
pub fn rmse_sd(estimate_sd: &DMatrix<f64>, reference_sd: &DMatrix<f64>) -> Result<f64> {
    rmse(estimate_sd, reference_sd, "rmse_sd")
}

/// Seconds per effective sample. Laplace draws are independent, so the
/// effective sample size is the draw count.
pub fn seconds_per_effective_sample(wall_seconds: f64, draws: usize) -> Result<f64> {
    if draws == 0 {
        return Err(BenchError::Input("seconds per effective sample needs at least one draw".into()));
    }
    Ok(wall_seconds / draws as f64)
}

/// Weakly informative prior for `D` categories and `Q` covariates:
/// `Θ = 0`, `Γ = I_Q`, `υ = D + 3`, and `Ξ` with `υ - D` on the diagonal and
/// `(υ - D)/2` off it.
pub fn default_prior(d: usize, q: usize) -> Result<GmclHyper> {
    if d < 2 {
        return Err(BenchError::Input(format!("default prior needs D >= 2, got {d}")));
    }
    let p = d - 1;
    let upsilon = (d + 3) as f64;
    let diag = upsilon - d as f64;
    let xi = DMatrix::from_fn(p, p, |i, j| if i == j { diag } else { diag / 2.0 });
    GmclHyper::new(DMatrix::zeros(p, q), DMatrix::identity(q, q), xi, upsilon)
        .map_err(|e| BenchError::Input(format!("default prior: {e}")))
}

/// Type-7 (linear interpolation) empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Entrywise posterior summaries of a set of equally shaped draws.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSummary {
    pub mean: DMatrix<f64>,
    /// Sample standard deviation (divisor `S - 1`; zero when `S = 1`).
    pub sd: DMatrix<f64>,
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
}

pub const LOWER_PROB: f64 = 0.025;
pub const UPPER_PROB: f64 = 0.975;

impl MatrixSummary {
    pub fn from_draws(draws: &[DMatrix<f64>]) -> Result<Self> {
        let first = draws.first().ok_or_else(|| BenchError::Input("no draws to summarize".into()))?;
        let (r, c) = first.shape();
        if draws.iter().any(|d| d.shape() != (r, c)) {
            return Err(BenchError::Input("draws differ in shape".into()));
        }
        let s = draws.len() as f64;
        let mut mean = DMatrix::zeros(r, c);
        for d in draws {
            mean += d;
        }
        mean /= s;
        let mut sd = DMatrix::zeros(r, c);
        let mut lower = DMatrix::zeros(r, c);
        let mut upper = DMatrix::zeros(r, c);
        let mut column = vec![0.0; draws.len()];
        for k in 0..r * c {
            for (v, d) in column.iter_mut().zip(draws) {
                *v = d[k];
            }
            if draws.len() > 1 {
                sd[k] = (column.iter().map(|v| (v - mean[k]).powi(2)).sum::<f64>() / (s - 1.0)).sqrt();
            }
            column.sort_by(f64::total_cmp);
            lower[k] = quantile_sorted(&column, LOWER_PROB);
            upper[k] = quantile_sorted(&column, UPPER_PROB);
        }
        Ok(MatrixSummary { mean, sd, lower, upper })
    }
}
