use std::path::Path;
use std::time::Instant;

use mlnltp::engine::{cu_sample, FactorKind, LtpModel, OptimizerConfig, PosteriorDraws};
use mlnltp::gmcl::{collapse_gmcl, GmclDraw, GmclHyper, GmclUncollapser};
use mlnltp::mln::alr_to_clr_matrix;
use mlnltp::{CountMatrix, RngSeed};
use nalgebra::DMatrix;

use crate::config::FitConfig;
use crate::error::{BenchError, Result, Stage};
use crate::io::{format_real, load_count_table, load_covariate_table, write_atomic, OutputTable};
use crate::metrics::{seconds_per_effective_sample, MatrixSummary};

/// Counts, covariates and their labels, checked for matching sample counts.
#[derive(Debug, Clone)]
pub struct FitInputs {
    pub y: CountMatrix,
    pub x: DMatrix<f64>,
    pub category_names: Vec<String>,
    pub covariate_names: Vec<String>,
}

impl FitInputs {
    pub fn new(y: CountMatrix, x: DMatrix<f64>) -> Result<Self> {
        let category_names = (1..=y.categories()).map(|i| format!("c{i}")).collect();
        let covariate_names = (1..=x.nrows()).map(|i| format!("x{i}")).collect();
        Self::with_names(y, x, category_names, covariate_names)
    }

    pub fn with_names(
        y: CountMatrix,
        x: DMatrix<f64>,
        category_names: Vec<String>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        if y.samples() != x.ncols() {
            return Err(BenchError::Input(format!(
                "counts have {} samples but covariates have {}",
                y.samples(),
                x.ncols()
            )));
        }
        if x.nrows() == 0 {
            return Err(BenchError::Input("covariates need at least one row".into()));
        }
        if category_names.len() != y.categories() || covariate_names.len() != x.nrows() {
            return Err(BenchError::Input("label counts do not match the data".into()));
        }
        Ok(FitInputs { y, x, category_names, covariate_names })
    }

    pub fn load(counts: &Path, covariates: &Path) -> Result<Self> {
        let yt = load_count_table(counts)?;
        let xt = load_covariate_table(covariates)?;
        let category_names = yt.row_labels("c");
        let covariate_names = xt.row_labels("x");
        Self::with_names(CountMatrix::new(yt.values).stage("counts")?, xt.values, category_names, covariate_names)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub grad_sup_norm: f64,
    pub termination: String,
    pub factor: String,
    pub clipped_eigenvalues: usize,
    pub log_post_at_mode: f64,
}

/// Posterior summaries of `Λ` in ALR coordinates (`(D-1)×Q`, last category
/// as reference) and CLR coordinates (`D×Q`).
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub category_names: Vec<String>,
    pub covariate_names: Vec<String>,
    pub alr: MatrixSummary,
    pub clr: MatrixSummary,
    pub draws: usize,
    pub seed: u64,
    pub seconds: f64,
    pub diagnostics: FitDiagnostics,
}

impl FitReport {
    pub fn seconds_per_effective_sample(&self) -> f64 {
        seconds_per_effective_sample(self.seconds, self.draws).unwrap_or(f64::NAN)
    }

    /// One row per coefficient and coordinate system.
    pub fn lambda_table(&self) -> OutputTable {
        let mut t = OutputTable::new(&["coord", "category", "covariate", "mean", "sd", "q2.5", "q97.5"]);
        for (coord, s) in [("alr", &self.alr), ("clr", &self.clr)] {
            for j in 0..s.mean.ncols() {
                for i in 0..s.mean.nrows() {
                    t.push(vec![
                        coord.into(),
                        self.category_names[i].clone(),
                        self.covariate_names[j].clone(),
                        format_real(s.mean[(i, j)]),
                        format_real(s.sd[(i, j)]),
                        format_real(s.lower[(i, j)]),
                        format_real(s.upper[(i, j)]),
                    ]);
                }
            }
        }
        t
    }

    pub fn diagnostics_table(&self) -> OutputTable {
        let d = &self.diagnostics;
        let mut t = OutputTable::new(&["key", "value"]);
        for (k, v) in [
            ("draws", self.draws.to_string()),
            ("seed", self.seed.to_string()),
            ("converged", d.converged.to_string()),
            ("iterations", d.iterations.to_string()),
            ("grad_sup_norm", format_real(d.grad_sup_norm)),
            ("termination", d.termination.clone()),
            ("factor", d.factor.clone()),
            ("clipped_eigenvalues", d.clipped_eigenvalues.to_string()),
            ("log_post_at_mode", format_real(d.log_post_at_mode)),
        ] {
            t.push(vec![k.into(), v]);
        }
        t
    }

    pub fn timing_table(&self) -> OutputTable {
        let mut t = OutputTable::new(&["key", "value"]);
        t.push(vec!["seconds".into(), format_real(self.seconds)]);
        t.push(vec!["seconds_per_effective_sample".into(), format_real(self.seconds_per_effective_sample())]);
        t
    }
}

/// Writes `lambda.csv` and `diagnostics.csv`, which depend only on the data,
/// configuration and seed, and `timing.csv`, which does not.
pub fn write_fit_report(report: &FitReport, dir: &Path) -> Result<()> {
    write_atomic(&dir.join("lambda.csv"), &report.lambda_table().render())?;
    write_atomic(&dir.join("diagnostics.csv"), &report.diagnostics_table().render())?;
    write_atomic(&dir.join("timing.csv"), &report.timing_table().render())
}

/// Collapse, Laplace-approximate and uncollapse a GMCL model.
pub fn fit_gmcl(
    y: &CountMatrix,
    x: &DMatrix<f64>,
    hyper: &GmclHyper,
    optimizer: &OptimizerConfig,
    draws: usize,
    seed: RngSeed,
) -> Result<PosteriorDraws<GmclDraw>> {
    let prior = collapse_gmcl(hyper, x).stage("gmcl")?;
    let model = LtpModel::new(y.clone(), prior).stage("ltp-engine")?;
    let uncollapser = GmclUncollapser::new(hyper.clone(), x.clone()).stage("gmcl")?;
    cu_sample(&model, &uncollapser, draws, optimizer, seed).stage("ltp-engine")
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub report: FitReport,
    pub hyper: GmclHyper,
    pub posterior: PosteriorDraws<GmclDraw>,
}

pub fn fit_inputs(inputs: &FitInputs, config: &FitConfig) -> Result<FitOutput> {
    let draws = config.draws();
    if draws == 0 {
        return Err(BenchError::Config("draws must be at least 1".into()));
    }
    let hyper = config.prior(inputs.y.categories(), inputs.x.nrows())?;
    let optimizer = config.optimizer()?;
    let start = Instant::now();
    let posterior = fit_gmcl(&inputs.y, &inputs.x, &hyper, &optimizer, draws, RngSeed(config.seed()))?;
    let seconds = start.elapsed().as_secs_f64();

    let alr_draws: Vec<DMatrix<f64>> = posterior.params.iter().map(|d| d.lambda.clone()).collect();
    let to_clr = alr_to_clr_matrix(inputs.y.log_ratio_dim());
    let clr_draws: Vec<DMatrix<f64>> = alr_draws.iter().map(|l| &to_clr * l).collect();
    let fit = &posterior.fit;
    let diag = fit.diagnostics.as_ref();
    let report = FitReport {
        category_names: inputs.category_names.clone(),
        covariate_names: inputs.covariate_names.clone(),
        alr: MatrixSummary::from_draws(&alr_draws)?,
        clr: MatrixSummary::from_draws(&clr_draws)?,
        draws,
        seed: config.seed(),
        seconds,
        diagnostics: FitDiagnostics {
            converged: fit.converged,
            iterations: fit.iterations,
            grad_sup_norm: fit.grad_sup_norm,
            termination: format!("{:?}", fit.termination),
            factor: match diag.map(|d| d.factor) {
                Some(FactorKind::Cholesky) => "cholesky".into(),
                Some(FactorKind::ClippedEigen) => "clipped_eigen".into(),
                None => "none".into(),
            },
            clipped_eigenvalues: diag.map_or(0, |d| d.clipped_eigenvalues),
            log_post_at_mode: fit.log_post_at_mode,
        },
    };
    Ok(FitOutput { report, hyper, posterior })
}

/// The `fit` pipeline: read inputs and configuration, fit, summarize. Keys
/// in `overrides` take precedence over the configuration file.
pub fn run_fit(counts: &Path, covariates: &Path, config: Option<&Path>, overrides: &FitConfig) -> Result<FitOutput> {
    let base = match config {
        Some(p) => FitConfig::load(p)?,
        None => FitConfig::default(),
    };
    let inputs = FitInputs::load(counts, covariates)?;
    fit_inputs(&inputs, &base.merged(overrides))
}
