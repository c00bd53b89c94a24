//! Posterior predictive replicates of the count table.

use mlnltp::gmcl::GmclDraw;
use mlnltp::linalg::{cholesky, standard_normal_matrix};
use mlnltp::RngSeed;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{BenchError, Result, Stage};
use crate::io::{format_real, OutputTable};
use crate::metrics::{quantile_sorted, LOWER_PROB, UPPER_PROB};
use crate::sim::sample_counts;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    pub mean: DMatrix<f64>,
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
}

impl PredictiveSummary {
    /// Fraction of observed cells inside their predictive interval.
    pub fn coverage(&self, observed: &DMatrix<u64>) -> f64 {
        let inside = observed
            .iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .filter(|(&y, (&lo, &hi))| lo <= y as f64 && y as f64 <= hi)
            .count();
        inside as f64 / observed.len() as f64
    }

    pub fn table(&self, observed: &DMatrix<u64>, categories: &[String], samples: &[String]) -> OutputTable {
        let mut t = OutputTable::new(&["category", "sample", "observed", "mean", "q2.5", "q97.5"]);
        for j in 0..observed.ncols() {
            for i in 0..observed.nrows() {
                t.push(vec![
                    categories[i].clone(),
                    samples[j].clone(),
                    observed[(i, j)].to_string(),
                    format_real(self.mean[(i, j)]),
                    format_real(self.lower[(i, j)]),
                    format_real(self.upper[(i, j)]),
                ]);
            }
        }
        t
    }
}

/// One replicate count table per posterior draw:
/// `η_rep ~ N(ΛX, Σ)` column-wise, then `Y_rep_·j ~ Multinomial(depth_j, ALR⁻¹(η_rep_·j))`.
pub fn posterior_replicates(
    draws: &[GmclDraw],
    x: &DMatrix<f64>,
    depths: &[u64],
    seed: RngSeed,
) -> Result<Vec<DMatrix<u64>>> {
    if draws.is_empty() {
        return Err(BenchError::Input("posterior predictive needs at least one draw".into()));
    }
    if depths.len() != x.ncols() {
        return Err(BenchError::Input(format!("{} depths for {} samples", depths.len(), x.ncols())));
    }
    draws
        .par_iter()
        .enumerate()
        .map(|(s, d)| {
            let mut rng = seed.stream(s as u64);
            let lower = cholesky(&d.sigma, "Sigma draw").stage("ppc")?.l();
            let eta = &d.lambda * x + lower * standard_normal_matrix(d.sigma.nrows(), x.ncols(), &mut rng);
            Ok(sample_counts(&eta, depths, &mut rng))
        })
        .collect()
}

/// Per-entry predictive mean and equal-tailed 95% interval.
pub fn posterior_predictive(
    draws: &[GmclDraw],
    x: &DMatrix<f64>,
    depths: &[u64],
    seed: RngSeed,
) -> Result<PredictiveSummary> {
    let reps = posterior_replicates(draws, x, depths, seed)?;
    let (r, c) = reps[0].shape();
    let mut mean = DMatrix::zeros(r, c);
    let mut lower = DMatrix::zeros(r, c);
    let mut upper = DMatrix::zeros(r, c);
    let mut values = vec![0.0; reps.len()];
    for k in 0..r * c {
        for (v, rep) in values.iter_mut().zip(&reps) {
            *v = rep[k] as f64;
        }
        mean[k] = values.iter().sum::<f64>() / values.len() as f64;
        values.sort_by(f64::total_cmp);
        lower[k] = quantile_sorted(&values, LOWER_PROB);
        upper[k] = quantile_sorted(&values, UPPER_PROB);
    }
    Ok(PredictiveSummary { mean, lower, upper })
}
