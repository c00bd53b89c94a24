//! Simulated multinomial logistic-normal regression data:
//!
//! ```text
//! Λ ~ N(0, I, I),  X ~ N(0, I, I),  Σ ~ IW(I_{D-1}, D + 10)
//! η_·j ~ N(Λ X_·j, Σ),  Y_·j ~ Multinomial(n_j, ALR⁻¹(η_·j)),  n_j ~ U{5000..10000}
//! ```

use std::path::Path;

use mlnltp::linalg::{cholesky, standard_normal_matrix};
use mlnltp::matvar::InverseWishartParams;
use mlnltp::mln::alr_inverse;
use mlnltp::{CountMatrix, RngSeed};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::{Binomial, Distribution};

use crate::error::{BenchError, Result, Stage};
use crate::io::{write_count_table, write_real_table, Table};

pub const MIN_DEPTH: u64 = 5000;
pub const MAX_DEPTH: u64 = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub lambda: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub eta: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: CountMatrix,
    pub x: DMatrix<f64>,
    pub truth: Option<Truth>,
    pub seed: u64,
}

impl Dataset {
    pub fn samples(&self) -> usize {
        self.y.samples()
    }

    pub fn categories(&self) -> usize {
        self.y.categories()
    }

    pub fn covariates(&self) -> usize {
        self.x.nrows()
    }

    /// Fraction of count cells that are zero.
    pub fn zero_fraction(&self) -> f64 {
        let y = self.y.counts();
        y.iter().filter(|&&c| c == 0).count() as f64 / y.len() as f64
    }

    pub fn category_names(&self) -> Vec<String> {
        (1..=self.categories()).map(|i| format!("c{i}")).collect()
    }

    pub fn covariate_names(&self) -> Vec<String> {
        (1..=self.covariates()).map(|i| format!("x{i}")).collect()
    }

    pub fn sample_names(&self) -> Vec<String> {
        (1..=self.samples()).map(|i| format!("s{i}")).collect()
    }

    /// `counts.csv`, `covariates.csv` and, when known, `lambda_true.csv`,
    /// `sigma_true.csv`, `eta_true.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let samples = Some(self.sample_names());
        write_count_table(
            &dir.join("counts.csv"),
            &Table {
                values: self.y.counts().clone(),
                row_names: Some(self.category_names()),
                col_names: samples.clone(),
            },
        )?;
        write_real_table(
            &dir.join("covariates.csv"),
            &Table { values: self.x.clone(), row_names: Some(self.covariate_names()), col_names: samples },
        )?;
        if let Some(t) = &self.truth {
            write_real_table(&dir.join("lambda_true.csv"), &Table::new(t.lambda.clone()))?;
            write_real_table(&dir.join("sigma_true.csv"), &Table::new(t.sigma.clone()))?;
            write_real_table(&dir.join("eta_true.csv"), &Table::new(t.eta.clone()))?;
        }
        Ok(())
    }
}

/// Multinomial draw by sequential conditional binomials.
pub fn sample_multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    let mut left = n;
    let mut mass: f64 = probs.iter().sum();
    for (k, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k + 1 == probs.len() {
            out[k] = left;
            break;
        }
        let cond = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let x = Binomial::new(left, cond).expect("probability clamped to [0, 1]").sample(rng);
        out[k] = x;
        left -= x;
        mass -= p;
    }
    out
}

/// Counts for each column of `eta` with the given depths.
pub fn sample_counts<R: Rng + ?Sized>(eta: &DMatrix<f64>, depths: &[u64], rng: &mut R) -> DMatrix<u64> {
    let pi = alr_inverse(eta);
    let mut y = DMatrix::zeros(pi.nrows(), pi.ncols());
    for (j, (col, &depth)) in pi.column_iter().zip(depths).enumerate() {
        let col: Vec<f64> = col.iter().copied().collect();
        y.set_column(j, &DVector::from_vec(sample_multinomial(depth, &col, rng)));
    }
    y
}

pub fn simulate_mln(n: usize, d: usize, q: usize, seed: u64) -> Result<Dataset> {
    if n < 1 || d < 2 || q < 1 {
        return Err(BenchError::Input(format!("simulation needs N >= 1, D >= 2, Q >= 1; got N={n}, D={d}, Q={q}")));
    }
    let p = d - 1;
    let mut rng = RngSeed(seed).rng();
    let lambda = standard_normal_matrix(p, q, &mut rng);
    let sigma = InverseWishartParams::new(DMatrix::identity(p, p), (d + 10) as f64)
        .and_then(|iw| iw.sample(&mut rng))
        .stage("simulate")?;
    let x = standard_normal_matrix(q, n, &mut rng);
    let sigma_lower = cholesky(&sigma, "Sigma").stage("simulate")?.l();
    let eta = &lambda * &x + sigma_lower * standard_normal_matrix(p, n, &mut rng);
    let depths: Vec<u64> = (0..n).map(|_| rng.random_range(MIN_DEPTH..=MAX_DEPTH)).collect();
    let y = CountMatrix::new(sample_counts(&eta, &depths, &mut rng)).stage("simulate")?;
    Ok(Dataset { y, x, truth: Some(Truth { lambda, sigma, eta }), seed })
}
