//! Generalized multinomial logistic-normal dynamic linear models:
//!
//! ```text
//! η_tᵀ = F_tᵀ Θ_t + ν_tᵀ,        ν_t ~ N(0, γ_t Σ)
//! Θ_t  = G_t Θ_{t-1} + Ω_t,      Ω_t ~ N(0, W_t, Σ)
//! Θ_0 ~ N(M_0, C_0, Σ),          Σ ~ IW(Ξ, υ)
//! ```
//!
//! Times run `t = 1..T` and are the columns of `η` (`P×T`); `Θ_0` is the
//! pre-sample state. Given `η`, `(Θ_{0:T}, Σ)` is drawn by forward filtering
//! and backward simulation smoothing.
//!
//! Everything that depends only on the covariances (`R_t`, `C_t`, `q_t`, the
//! smoothing gains) is independent of `η`, so [`GmdlmUncollapser`] computes it
//! once and each draw only runs the mean recursions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::rngs::ChaCha8Rng;
use rand::Rng;

use crate::engine::Uncollapser;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, psd_factor, standard_normal_matrix, symmetrize, symmetrized};
use crate::matvar::{sample_inverse_wishart_chol, MatrixTParams};

#[derive(Debug, Clone, PartialEq)]
pub struct DlmSpec {
    /// `F_t` (`Q`-vectors), `t = 1..T`.
    pub f: Vec<DVector<f64>>,
    /// `G_t` (`Q×Q`).
    pub g: Vec<DMatrix<f64>>,
    /// `W_t` (`Q×Q`, positive semi-definite).
    pub w: Vec<DMatrix<f64>>,
    /// `γ_t > 0`.
    pub gamma: Vec<f64>,
    /// Prior state mean `M_0` (`Q×P`).
    pub m0: DMatrix<f64>,
    /// Prior state covariance `C_0` (`Q×Q`).
    pub c0: DMatrix<f64>,
    pub xi: DMatrix<f64>,
    pub upsilon: f64,
}

fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if max_abs_asym(m) > 1e-10 * m.amax().max(1.0) {
        return Err(Error::Parameter(format!("{what} is not symmetric")));
    }
    let eig = SymmetricEigen::new(symmetrized(m.clone())).eigenvalues;
    let scale = eig.amax().max(1.0);
    if eig.iter().any(|&l| l < -1e-10 * scale) || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter(format!("{what} is not positive semi-definite")));
    }
    Ok(())
}

fn max_abs_asym(m: &DMatrix<f64>) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    crate::linalg::max_asymmetry(m)
}

impl DlmSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        f: Vec<DVector<f64>>,
        g: Vec<DMatrix<f64>>,
        w: Vec<DMatrix<f64>>,
        gamma: Vec<f64>,
        m0: DMatrix<f64>,
        c0: DMatrix<f64>,
        xi: DMatrix<f64>,
        upsilon: f64,
    ) -> Result<Self> {
        let t = f.len();
        if g.len() != t || w.len() != t || gamma.len() != t {
            return Err(Error::Parameter(format!(
                "F, G, W and gamma must all have length T; got {}, {}, {}, {}",
                t,
                g.len(),
                w.len(),
                gamma.len()
            )));
        }
        let (q, p) = m0.shape();
        if c0.shape() != (q, q) {
            return Err(Error::Parameter(format!("C0 must be {q}x{q}")));
        }
        check_psd(&c0, "C0")?;
        if xi.shape() != (p, p) {
            return Err(Error::Parameter(format!("Xi must be {p}x{p}")));
        }
        cholesky(&xi, "Xi")?;
        if !(upsilon > p as f64 - 1.0) {
            return Err(Error::Parameter(format!("upsilon must exceed P - 1, got {upsilon}")));
        }
        for i in 0..t {
            let step = i + 1;
            if f[i].len() != q {
                return Err(Error::Parameter(format!("F_{step} must have length {q}")));
            }
            if g[i].shape() != (q, q) || w[i].shape() != (q, q) {
                return Err(Error::Parameter(format!("G_{step} and W_{step} must be {q}x{q}")));
            }
            check_psd(&w[i], &format!("W_{step}"))?;
            if !(gamma[i] > 0.0) || !gamma[i].is_finite() {
                return Err(Error::Parameter(format!("gamma_{step} must be positive, got {}", gamma[i])));
            }
        }
        Ok(DlmSpec { f, g, w, gamma, m0, c0, xi, upsilon })
    }

    /// The same `F`, `G`, `W` and `γ` at every step.
    #[allow(clippy::too_many_arguments)]
    pub fn time_invariant(
        horizon: usize,
        f: DVector<f64>,
        g: DMatrix<f64>,
        w: DMatrix<f64>,
        gamma: f64,
        m0: DMatrix<f64>,
        c0: DMatrix<f64>,
        xi: DMatrix<f64>,
        upsilon: f64,
    ) -> Result<Self> {
        Self::new(vec![f; horizon], vec![g; horizon], vec![w; horizon], vec![gamma; horizon], m0, c0, xi, upsilon)
    }

    pub fn horizon(&self) -> usize {
        self.f.len()
    }

    pub fn q(&self) -> usize {
        self.m0.nrows()
    }

    pub fn p(&self) -> usize {
        self.m0.ncols()
    }
}

/// Matrix-t parameters of the marginal of `η`.
///
/// Column `t` of `B` is `(F_tᵀ G_t ⋯ G_1 M_0)ᵀ`. With `V_t` the state
/// variance (`V_0 = C_0`, `V_t = G_t V_{t-1} G_tᵀ + W_t`), `A_tt = γ_t + F_tᵀ V_t F_t`
/// and `A_ts = F_tᵀ G_t ⋯ G_{s+1} V_s F_s` for `s < t`.
pub fn collapse_gmdlm(spec: &DlmSpec) -> Result<MatrixTParams> {
    let (t_max, p) = (spec.horizon(), spec.p());
    let mut b = DMatrix::zeros(p, t_max);
    let mut a = DMatrix::zeros(t_max, t_max);
    let mut mean = spec.m0.clone();
    let mut v = spec.c0.clone();
    for t in 0..t_max {
        mean = &spec.g[t] * mean;
        b.set_column(t, &(mean.transpose() * &spec.f[t]));
        v = symmetrized(&spec.g[t] * v * spec.g[t].transpose() + &spec.w[t]);
        let mut u = &v * &spec.f[t];
        a[(t, t)] = spec.gamma[t] + spec.f[t].dot(&u);
        for later in (t + 1)..t_max {
            u = &spec.g[later] * u;
            let cov = spec.f[later].dot(&u);
            a[(later, t)] = cov;
            a[(t, later)] = cov;
        }
    }
    MatrixTParams::new(spec.upsilon, b, spec.xi.clone(), a)
}

/// Forward-filter quantities. Index `t` of `m`, `c`, `xi` and `upsilon`
/// is time `t` (entry 0 holds the prior); the one-step quantities
/// `a`, `r`, `f`, `q`, `e`, `s` are stored at index `t - 1`.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub m: Vec<DMatrix<f64>>,
    pub c: Vec<DMatrix<f64>>,
    pub a: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    pub f: Vec<DVector<f64>>,
    pub q: Vec<f64>,
    pub e: Vec<DVector<f64>>,
    pub s: Vec<DVector<f64>>,
    pub xi: Vec<DMatrix<f64>>,
    pub upsilon: Vec<f64>,
}

impl FilterState {
    pub fn horizon(&self) -> usize {
        self.q.len()
    }

    /// `Ξ_T`.
    pub fn xi_final(&self) -> &DMatrix<f64> {
        self.xi.last().expect("filter state always holds the prior")
    }

    /// `υ_T`.
    pub fn upsilon_final(&self) -> f64 {
        *self.upsilon.last().expect("filter state always holds the prior")
    }
}

/// The covariance half of the filter, which does not depend on `η`.
#[derive(Debug, Clone)]
struct CovariancePass {
    c: Vec<DMatrix<f64>>,
    r: Vec<DMatrix<f64>>,
    q: Vec<f64>,
    s: Vec<DVector<f64>>,
}

impl CovariancePass {
    fn new(spec: &DlmSpec) -> Result<Self> {
        let t_max = spec.horizon();
        let mut c = Vec::with_capacity(t_max + 1);
        let mut r = Vec::with_capacity(t_max);
        let mut q = Vec::with_capacity(t_max);
        let mut s = Vec::with_capacity(t_max);
        c.push(spec.c0.clone());
        for t in 0..t_max {
            let rt = symmetrized(&spec.g[t] * &c[t] * spec.g[t].transpose() + &spec.w[t]);
            let rf = &rt * &spec.f[t];
            let qt = spec.gamma[t] + spec.f[t].dot(&rf);
            if !(qt > 0.0) || !qt.is_finite() {
                return Err(Error::Filtering {
                    t: t + 1,
                    reason: format!("forecast variance q_t = {qt} is not positive"),
                });
            }
            let st = rf / qt;
            let mut ct = &rt - &st * st.transpose() * qt;
            symmetrize(&mut ct);
            c.push(ct);
            r.push(rt);
            q.push(qt);
            s.push(st);
        }
        Ok(CovariancePass { c, r, q, s })
    }
}

fn check_eta(eta: &DMatrix<f64>, spec: &DlmSpec) -> Result<()> {
    if eta.shape() != (spec.p(), spec.horizon()) {
        return Err(Error::Parameter(format!(
            "eta is {:?}, expected {}x{} (P x T)",
            eta.shape(),
            spec.p(),
            spec.horizon()
        )));
    }
    Ok(())
}

fn run_filter(eta: &DMatrix<f64>, spec: &DlmSpec, cov: &CovariancePass) -> FilterState {
    let t_max = spec.horizon();
    let mut m = Vec::with_capacity(t_max + 1);
    let mut a = Vec::with_capacity(t_max);
    let mut f = Vec::with_capacity(t_max);
    let mut e = Vec::with_capacity(t_max);
    let mut xi = Vec::with_capacity(t_max + 1);
    let mut upsilon = Vec::with_capacity(t_max + 1);
    m.push(spec.m0.clone());
    xi.push(spec.xi.clone());
    upsilon.push(spec.upsilon);
    for t in 0..t_max {
        let at = &spec.g[t] * &m[t];
        let ft = at.transpose() * &spec.f[t];
        let et = eta.column(t) - &ft;
        let mt = &at + &cov.s[t] * et.transpose();
        let mut xit = &xi[t] + &et * et.transpose() / cov.q[t];
        symmetrize(&mut xit);
        m.push(mt);
        a.push(at);
        f.push(ft);
        e.push(et);
        xi.push(xit);
        upsilon.push(upsilon[t] + 1.0);
    }
    FilterState { m, c: cov.c.clone(), a, r: cov.r.clone(), f, q: cov.q.clone(), e, s: cov.s.clone(), xi, upsilon }
}

/// Forward filtering with `Σ` integrated out.
pub fn filter_gmdlm(eta: &DMatrix<f64>, spec: &DlmSpec) -> Result<FilterState> {
    check_eta(eta, spec)?;
    let cov = CovariancePass::new(spec)?;
    Ok(run_filter(eta, spec, &cov))
}

/// Backward-pass gains `Z_t = C_t G_{t+1}ᵀ R_{t+1}⁻¹` and square roots of
/// `C_t* = C_t - Z_t R_{t+1} Z_tᵀ`, for `t = 0..T-1`, plus a square root of `C_T`.
#[derive(Debug, Clone)]
struct SmoothingGains {
    z: Vec<DMatrix<f64>>,
    cstar: Vec<DMatrix<f64>>,
    cstar_root: Vec<DMatrix<f64>>,
    c_final_root: DMatrix<f64>,
    pseudo_inverse_steps: Vec<usize>,
}

/// Relative eigenvalue floor below which `R_t` counts as singular. Cholesky
/// alone is not a usable test: rank-deficient matrices often factor with a
/// rounding-sized pivot.
const SINGULAR_RATIO: f64 = 1e-12;

/// Inverse of a symmetric PSD matrix, or its pseudo-inverse when singular.
fn psd_inverse(r: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let eig = SymmetricEigen::new(symmetrized(r.clone()));
    let tol = eig.eigenvalues.amax() * SINGULAR_RATIO;
    let singular = eig.eigenvalues.iter().any(|&l| l <= tol);
    if !singular {
        if let Some(ch) = r.clone().cholesky() {
            return (symmetrized(ch.inverse()), false);
        }
    }
    let mut scaled = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let inv = if l > tol { 1.0 / l } else { 0.0 };
        scaled.column_mut(j).scale_mut(inv);
    }
    (symmetrized(&scaled * eig.eigenvectors.transpose()), true)
}

impl SmoothingGains {
    fn new(spec: &DlmSpec, c: &[DMatrix<f64>], r: &[DMatrix<f64>]) -> Result<Self> {
        let t_max = spec.horizon();
        let mut z = Vec::with_capacity(t_max);
        let mut cstar_all = Vec::with_capacity(t_max);
        let mut cstar_root = Vec::with_capacity(t_max);
        let mut pseudo_inverse_steps = Vec::new();
        for t in 0..t_max {
            let (r_inv, pinv) = psd_inverse(&r[t]);
            if pinv {
                pseudo_inverse_steps.push(t);
            }
            let zt = &c[t] * spec.g[t].transpose() * r_inv;
            let mut cstar = &c[t] - &zt * &r[t] * zt.transpose();
            symmetrize(&mut cstar);
            if zt.iter().chain(cstar.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Smoothing { t, reason: "non-finite smoothing gain".into() });
            }
            z.push(zt);
            cstar_root.push(psd_factor(&cstar));
            cstar_all.push(cstar);
        }
        Ok(SmoothingGains {
            z,
            cstar: cstar_all,
            cstar_root,
            c_final_root: psd_factor(&c[t_max]),
            pseudo_inverse_steps,
        })
    }
}

/// One joint draw from `p(Θ_{0:T}, Σ | η)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothDraw {
    /// `Θ_t` (`Q×P`) for `t = 0..T`.
    pub theta: Vec<DMatrix<f64>>,
    pub sigma: DMatrix<f64>,
    /// Backward steps `t` where `R_{t+1}` was singular and its pseudo-inverse was used.
    pub pseudo_inverse_steps: Vec<usize>,
}

fn backward_sample<R: Rng + ?Sized>(filter: &FilterState, gains: &SmoothingGains, rng: &mut R) -> Result<SmoothDraw> {
    let t_max = filter.horizon();
    let xi_chol = cholesky(filter.xi_final(), "Xi_T")?;
    let sigma = sample_inverse_wishart_chol(&xi_chol.l(), filter.upsilon_final(), rng);
    let sigma_root_t = cholesky(&sigma, "Sigma draw")?.l().transpose();
    let (q, p) = filter.m[0].shape();
    let mut theta = vec![DMatrix::zeros(q, p); t_max + 1];
    theta[t_max] = &filter.m[t_max] + &gains.c_final_root * standard_normal_matrix(q, p, rng) * &sigma_root_t;
    for t in (0..t_max).rev() {
        let mean = &filter.m[t] + &gains.z[t] * (&theta[t + 1] - &filter.a[t]);
        theta[t] = mean + &gains.cstar_root[t] * standard_normal_matrix(q, p, rng) * &sigma_root_t;
    }
    Ok(SmoothDraw { theta, sigma, pseudo_inverse_steps: gains.pseudo_inverse_steps.clone() })
}

/// Backward simulation smoothing from a completed filter. `R_{t+1}` falls back
/// to its pseudo-inverse when singular (for example with `W_t = 0`).
pub fn smooth_gmdlm<R: Rng + ?Sized>(filter: &FilterState, spec: &DlmSpec, rng: &mut R) -> Result<SmoothDraw> {
    if filter.horizon() != spec.horizon() {
        return Err(Error::Parameter("filter state and spec have different horizons".into()));
    }
    let gains = SmoothingGains::new(spec, &filter.c, &filter.r)?;
    backward_sample(filter, &gains, rng)
}

/// Smoothed state moments given `η` and `Σ`: `Θ_t | η, Σ ~ N(mean_t, cov_t, Σ)`
/// for `t = 0..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedMoments {
    pub mean: Vec<DMatrix<f64>>,
    /// Row covariances (`Q×Q`).
    pub cov: Vec<DMatrix<f64>>,
}

fn smoothed_moments(filter: &FilterState, gains: &SmoothingGains) -> SmoothedMoments {
    let t_max = filter.horizon();
    let mut mean = filter.m.clone();
    let mut cov = filter.c.clone();
    for t in (0..t_max).rev() {
        mean[t] = &filter.m[t] + &gains.z[t] * (&mean[t + 1] - &filter.a[t]);
        let mut c = &gains.cstar[t] + &gains.z[t] * &cov[t + 1] * gains.z[t].transpose();
        symmetrize(&mut c);
        cov[t] = c;
    }
    SmoothedMoments { mean, cov }
}

/// Fixed-interval (Rauch-Tung-Striebel) smoother with the same gains as
/// [`smooth_gmdlm`]. The moments hold for every `Σ`.
pub fn smooth_moments_gmdlm(filter: &FilterState, spec: &DlmSpec) -> Result<SmoothedMoments> {
    if filter.horizon() != spec.horizon() {
        return Err(Error::Parameter("filter state and spec have different horizons".into()));
    }
    let gains = SmoothingGains::new(spec, &filter.c, &filter.r)?;
    Ok(smoothed_moments(filter, &gains))
}

/// Conditional sampler `p(Θ_{0:T}, Σ | η)` for use with the CU sampler.
#[derive(Debug, Clone)]
pub struct GmdlmUncollapser {
    spec: DlmSpec,
    cov: CovariancePass,
    gains: SmoothingGains,
}

impl GmdlmUncollapser {
    pub fn new(spec: DlmSpec) -> Result<Self> {
        let cov = CovariancePass::new(&spec)?;
        let gains = SmoothingGains::new(&spec, &cov.c, &cov.r)?;
        Ok(GmdlmUncollapser { spec, cov, gains })
    }

    pub fn spec(&self) -> &DlmSpec {
        &self.spec
    }

    pub fn filter(&self, eta: &DMatrix<f64>) -> Result<FilterState> {
        check_eta(eta, &self.spec)?;
        Ok(run_filter(eta, &self.spec, &self.cov))
    }

    pub fn draw<R: Rng + ?Sized>(&self, eta: &DMatrix<f64>, rng: &mut R) -> Result<SmoothDraw> {
        let filter = self.filter(eta)?;
        backward_sample(&filter, &self.gains, rng)
    }

    pub fn smoothed_moments(&self, eta: &DMatrix<f64>) -> Result<SmoothedMoments> {
        Ok(smoothed_moments(&self.filter(eta)?, &self.gains))
    }

    /// Backward conditional covariances `C_t*` for `t = 0..T-1`.
    pub fn smoothing_covariances(&self) -> &[DMatrix<f64>] {
        &self.gains.cstar
    }

    /// Steps whose smoothing gain used a pseudo-inverse.
    pub fn pseudo_inverse_steps(&self) -> &[usize] {
        &self.gains.pseudo_inverse_steps
    }
}

impl Uncollapser for GmdlmUncollapser {
    type Draw = SmoothDraw;

    fn uncollapse(&self, eta: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Result<SmoothDraw> {
        self.draw(eta, rng)
    }
}
