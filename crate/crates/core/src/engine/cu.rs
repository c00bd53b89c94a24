use nalgebra::DMatrix;
use rand::rngs::ChaCha8Rng;
use rayon::prelude::*;

use super::laplace::{build_laplace, map_estimate, sample_laplace, LaplaceFit, OptimizerConfig};
use super::model::{Likelihood, LtpModel};
use crate::error::Result;
use crate::rng::RngSeed;

/// Exact conditional sampler `p(Ψ | η)` for the parameters integrated out of
/// the collapsed form.
pub trait Uncollapser: Sync {
    type Draw: Send;

    fn uncollapse(&self, eta: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Result<Self::Draw>;
}

/// Paired draws `(η⁽ˢ⁾, Ψ⁽ˢ⁾)` and the fit they came from.
#[derive(Debug, Clone)]
pub struct PosteriorDraws<D> {
    pub eta: Vec<DMatrix<f64>>,
    pub params: Vec<D>,
    pub fit: LaplaceFit,
}

impl<D> PosteriorDraws<D> {
    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }
}

const LAPLACE_STREAM: u64 = 1;
const UNCOLLAPSE_STREAM: u64 = 2;

/// Seed for the Laplace draws of a CU run started from `seed`.
pub fn laplace_seed(seed: RngSeed) -> RngSeed {
    seed.derive(LAPLACE_STREAM)
}

/// Seed for the conditional draws of a CU run started from `seed`.
pub fn uncollapse_seed(seed: RngSeed) -> RngSeed {
    seed.derive(UNCOLLAPSE_STREAM)
}

/// Applies `uncollapser` to each `η` draw in parallel; draw `s` uses stream
/// `s` of `seed`.
pub fn uncollapse_all<U: Uncollapser>(uncollapser: &U, etas: &[DMatrix<f64>], seed: RngSeed) -> Result<Vec<U::Draw>> {
    etas.par_iter().enumerate().map(|(s, eta)| uncollapser.uncollapse(eta, &mut seed.stream(s as u64))).collect()
}

/// Collapse-uncollapse sampler: posterior mode, Laplace approximation of the
/// collapsed posterior, then one exact conditional draw per `η` draw.
pub fn cu_sample<L: Likelihood, U: Uncollapser>(
    model: &LtpModel<L>,
    uncollapser: &U,
    draws: usize,
    config: &OptimizerConfig,
    seed: RngSeed,
) -> Result<PosteriorDraws<U::Draw>> {
    let fit = map_estimate(model, config)?;
    let fit = build_laplace(fit, model, config.clip_ratio)?;
    let eta = sample_laplace(&fit, draws, laplace_seed(seed))?;
    let params = uncollapse_all(uncollapser, &eta, uncollapse_seed(seed))?;
    Ok(PosteriorDraws { eta, params, fit })
}
