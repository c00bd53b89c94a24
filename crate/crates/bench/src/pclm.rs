//! Pseudo-count linear model: `η` fixed at the ALR of `Y + pseudo`
//! proportions, then conjugate draws of `(Λ, Σ)`. Ignores multinomial count
//! variation by construction; kept as a baseline.

use mlnltp::engine::uncollapse_all;
use mlnltp::gmcl::{GmclDraw, GmclHyper, GmclUncollapser};
use mlnltp::{CountMatrix, RngSeed};
use nalgebra::DMatrix;

use crate::error::{BenchError, Result, Stage};

#[derive(Debug, Clone)]
pub struct PclmDraws {
    pub eta_hat: DMatrix<f64>,
    pub params: Vec<GmclDraw>,
}

pub fn pclm_fit(
    y: &CountMatrix,
    x: &DMatrix<f64>,
    hyper: &GmclHyper,
    pseudo: f64,
    draws: usize,
    seed: RngSeed,
) -> Result<PclmDraws> {
    if !(pseudo > 0.0) {
        return Err(BenchError::Input(format!("pseudo-count must be positive, got {pseudo}")));
    }
    let eta_hat = y.alr_of_proportions(pseudo).stage("pclm")?;
    let uncollapser = GmclUncollapser::new(hyper.clone(), x.clone()).stage("pclm")?;
    let etas = vec![eta_hat.clone(); draws];
    let params = uncollapse_all(&uncollapser, &etas, seed).stage("pclm")?;
    Ok(PclmDraws { eta_hat, params })
}
