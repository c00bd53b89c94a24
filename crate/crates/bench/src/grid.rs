//! The `bench` table: simulate, fit and score over a grid of `(N, D, Q)`.

use std::str::FromStr;
use std::time::Instant;

use mlnltp::RngSeed;
use nalgebra::DMatrix;

use crate::config::FitConfig;
use crate::error::{BenchError, Result};
use crate::fit::{fit_inputs, FitInputs};
use crate::io::{format_real, OutputTable};
use crate::metrics::{rmse_lambda, rmse_sd, seconds_per_effective_sample, MatrixSummary};
use crate::pclm::pclm_fit;
use crate::reference::{mcmc_reference, McmcSettings};
use crate::sim::simulate_mln;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridPoint {
    pub n: usize,
    pub d: usize,
    pub q: usize,
}

impl FromStr for GridPoint {
    type Err = BenchError;

    /// `NxDxQ`, e.g. `100x30x5`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split('x').collect();
        let parse = |v: &str| v.parse::<usize>().map_err(|_| BenchError::Config(format!("bad grid point {s:?}")));
        match parts.as_slice() {
            [n, d, q] => Ok(GridPoint { n: parse(n)?, d: parse(d)?, q: parse(q)? }),
            _ => Err(BenchError::Config(format!("grid point {s:?} is not of the form NxDxQ"))),
        }
    }
}

pub fn parse_grid(spec: &str) -> Result<Vec<GridPoint>> {
    spec.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone)]
pub struct BenchSettings {
    pub replicates: usize,
    pub seed: u64,
    pub config: FitConfig,
    /// Run the MCMC reference and report standard-deviation errors.
    pub reference: Option<McmcSettings>,
}

pub fn run_bench(grid: &[GridPoint], settings: &BenchSettings) -> Result<OutputTable> {
    let mut table = OutputTable::new(&[
        "n",
        "d",
        "q",
        "replicate",
        "seed",
        "zero_fraction",
        "seconds",
        "spes",
        "converged",
        "rmse_lambda",
        "rmse_lambda_pclm",
        "rmse_sd",
        "rmse_sd_pclm",
    ]);
    let draws = settings.config.draws();
    for point in grid {
        for rep in 0..settings.replicates {
            let tag = ((point.n as u64) << 40) ^ ((point.d as u64) << 20) ^ point.q as u64;
            let seed = RngSeed(settings.seed).derive(tag).derive(rep as u64).0;
            let data = simulate_mln(point.n, point.d, point.q, seed)?;
            let truth = &data.truth.as_ref().expect("simulated data carries its truth").lambda;
            let inputs = FitInputs::new(data.y.clone(), data.x.clone())?;
            let config = settings.config.merged(&FitConfig { seed: Some(seed), ..Default::default() });
            let start = Instant::now();
            let out = fit_inputs(&inputs, &config)?;
            let seconds = start.elapsed().as_secs_f64();
            let pclm = pclm_fit(&data.y, &data.x, &out.hyper, config.pseudo()?, draws, RngSeed(seed).derive(7))?;
            let pclm_summary = MatrixSummary::from_draws(
                &pclm.params.iter().map(|d| d.lambda.clone()).collect::<Vec<DMatrix<f64>>>(),
            )?;
            let (sd_err, sd_err_pclm) = match &settings.reference {
                Some(g) => {
                    let reference = mcmc_reference(&data.y, &data.x, &out.hyper, g, RngSeed(seed).derive(8))?;
                    (
                        format_real(rmse_sd(&out.report.alr.sd, &reference.lambda_sd)?),
                        format_real(rmse_sd(&pclm_summary.sd, &reference.lambda_sd)?),
                    )
                }
                None => ("NA".into(), "NA".into()),
            };
            table.push(vec![
                point.n.to_string(),
                point.d.to_string(),
                point.q.to_string(),
                rep.to_string(),
                seed.to_string(),
                format_real(data.zero_fraction()),
                format_real(seconds),
                format_real(seconds_per_effective_sample(seconds, draws)?),
                out.report.diagnostics.converged.to_string(),
                format_real(rmse_lambda(&out.report.alr.mean, truth)?),
                format_real(rmse_lambda(&pclm_summary.mean, truth)?),
                sd_err,
                sd_err_pclm,
            ]);
        }
    }
    Ok(table)
}
