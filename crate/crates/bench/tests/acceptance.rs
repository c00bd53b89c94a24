//! Acceptance checks. Each criterion runs at its stated tolerance and prints
//! one PASS/FAIL line; the process exits nonzero if any fails. Criteria run
//! one after another so the timing checks do not compete for cores.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mlnltp::engine::LtpModel;
use mlnltp::gmcl::{collapse_gmcl, GmclHyper, GmclUncollapser};
use mlnltp::gmdlm::{collapse_gmdlm, filter_gmdlm, smooth_moments_gmdlm, DlmSpec, GmdlmUncollapser};
use mlnltp::linalg::{kron, standard_normal_matrix};
use mlnltp::matvar::{InverseWishartParams, MatrixNormalParams};
use mlnltp::{CountMatrix, RngSeed};
use mlnltp_bench::config::FitConfig;
use mlnltp_bench::fit::{fit_inputs, run_fit, FitInputs};
use mlnltp_bench::metrics::{rmse_sd, MatrixSummary};
use mlnltp_bench::pclm::pclm_fit;
use mlnltp_bench::reference::{mcmc_reference, McmcSettings};
use mlnltp_bench::sim::simulate_mln;
use nalgebra::{DMatrix, DVector};
use rand::rngs::ChaCha8Rng;
use rand::{RngExt, SeedableRng};
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_spd(n: usize, rng: &mut ChaCha8Rng, ridge: f64) -> DMatrix<f64> {
    let g = standard_normal_matrix(n, n, rng);
    &g * g.transpose() / n as f64 + DMatrix::identity(n, n) * ridge
}

/// Sample means of each statistic with standard errors; `stats[s][k]` is
/// statistic `k` of draw `s`.
fn worst_z(stats: &[Vec<f64>], target: &[f64]) -> f64 {
    let n = stats.len() as f64;
    let mut worst: f64 = 0.0;
    for (k, t) in target.iter().enumerate() {
        let mean = stats.iter().map(|r| r[k]).sum::<f64>() / n;
        let var = stats.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        worst = worst.max(((mean - t) / (var / n).sqrt()).abs());
    }
    worst
}

/// Entries of `vec(x)` then the upper triangle of the outer product of
/// `vec(x) - center`.
fn moment_stats(x: &DMatrix<f64>, center: &DMatrix<f64>) -> Vec<f64> {
    let c = x - center;
    let mut out: Vec<f64> = x.iter().copied().collect();
    for i in 0..c.len() {
        for j in i..c.len() {
            out.push(c[i] * c[j]);
        }
    }
    out
}

fn moment_targets(mean: &DMatrix<f64>, cov: &DMatrix<f64>) -> Vec<f64> {
    let mut out: Vec<f64> = mean.iter().copied().collect();
    for i in 0..mean.len() {
        for j in i..mean.len() {
            out.push(cov[(i, j)]);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// 1. derivatives

fn random_gmcl_model(case: u64) -> (LtpModel, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
    let p = 1 + case as usize % 6;
    let n = 1 + (case as usize * 5 + 2) % 6;
    let q = 1 + case as usize % 3;
    let zero_rate = if case.is_multiple_of(2) { 0.7 } else { 0.3 };
    let y =
        DMatrix::<u64>::from_fn(
            p + 1,
            n,
            |_, _| {
                if rng.random::<f64>() < zero_rate {
                    0
                } else {
                    rng.random_range(1..200)
                }
            },
        );
    let hyper = GmclHyper::new(
        standard_normal_matrix(p, q, &mut rng),
        random_spd(q, &mut rng, 0.3),
        random_spd(p, &mut rng, 0.5),
        p as f64 + 1.0 + 4.0 * rng.random::<f64>(),
    )
    .unwrap();
    let x = standard_normal_matrix(q, n, &mut rng);
    let model = LtpModel::new(CountMatrix::new(y).unwrap(), collapse_gmcl(&hyper, &x).unwrap()).unwrap();
    let eta = &model.prior().mean + standard_normal_matrix(p, n, &mut rng);
    (model, eta)
}

fn derivatives() -> Outcome {
    let (mut worst_g, mut worst_h): (f64, f64) = (0.0, 0.0);
    for case in 0..20 {
        let (model, eta) = random_gmcl_model(case);
        let (_, grad) = model.objective_and_gradient(&eta).unwrap();
        let (hess, _) = model.objective_hessian(&eta).unwrap();
        let m = eta.len();
        let h = 1e-5;
        let mut fd_grad = DMatrix::zeros(eta.nrows(), eta.ncols());
        let mut fd_hess = DMatrix::zeros(m, m);
        for k in 0..m {
            let (mut up, mut dn) = (eta.clone(), eta.clone());
            up[k] += h;
            dn[k] -= h;
            fd_grad[k] = (model.objective(&up).unwrap() - model.objective(&dn).unwrap()) / (2.0 * h);
            let gu = model.objective_and_gradient(&up).unwrap().1;
            let gd = model.objective_and_gradient(&dn).unwrap().1;
            for i in 0..m {
                fd_hess[(i, k)] = (gu[i] - gd[i]) / (2.0 * h);
            }
        }
        worst_g = worst_g.max((&grad - &fd_grad).amax() / fd_grad.amax().max(1.0));
        worst_h = worst_h.max((&hess - &fd_hess).amax() / fd_hess.amax().max(1.0));
    }
    ensure(
        worst_g < 1e-6 && worst_h < 1e-4,
        format!("20 instances, max rel err gradient {worst_g:.1e} (< 1e-6), Hessian {worst_h:.1e} (< 1e-4)"),
    )
}

// ---------------------------------------------------------------------------
// GMDLM as one joint Gaussian

fn random_dlm(t: usize, q: usize, p: usize, seed: u64) -> DlmSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = (0..t).map(|_| DVector::from_iterator(q, standard_normal_matrix(q, 1, &mut rng).iter().copied())).collect();
    let g = (0..t).map(|_| DMatrix::identity(q, q) * 0.8 + standard_normal_matrix(q, q, &mut rng) * 0.3).collect();
    let w = (0..t).map(|_| random_spd(q, &mut rng, 0.05)).collect();
    let gamma = (0..t).map(|_| 0.2 + rng.random::<f64>()).collect();
    DlmSpec::new(
        f,
        g,
        w,
        gamma,
        standard_normal_matrix(q, p, &mut rng),
        random_spd(q, &mut rng, 0.2),
        random_spd(p, &mut rng, 0.5),
        p as f64 + 4.0,
    )
    .unwrap()
}

/// Rows `Θ_0..Θ_T` (`Q` each) then `η_1ᵀ..η_Tᵀ`, all sharing column
/// covariance `Σ`. Row covariance `L D Lᵀ` with `L` the map from the
/// independent noise blocks `C_0, W_t, γ_t`.
struct JointDlm {
    mean: DMatrix<f64>,
    u: DMatrix<f64>,
    q: usize,
    t: usize,
}

impl JointDlm {
    fn new(spec: &DlmSpec) -> Self {
        let (t_max, q, p) = (spec.horizon(), spec.q(), spec.p());
        let n = (t_max + 1) * q + t_max;
        let mut l = DMatrix::<f64>::zeros(n, n);
        let mut d = DMatrix::<f64>::zeros(n, n);
        let mut mean = DMatrix::<f64>::zeros(n, p);
        l.view_mut((0, 0), (q, q)).fill_with_identity();
        d.view_mut((0, 0), (q, q)).copy_from(&spec.c0);
        mean.rows_mut(0, q).copy_from(&spec.m0);
        for t in 1..=t_max {
            let mut cur = &spec.g[t - 1] * l.rows((t - 1) * q, q);
            for i in 0..q {
                cur[(i, t * q + i)] += 1.0;
            }
            d.view_mut((t * q, t * q), (q, q)).copy_from(&spec.w[t - 1]);
            let m_state = &spec.g[t - 1] * mean.rows((t - 1) * q, q);
            let row = (t_max + 1) * q + t - 1;
            let mut obs = spec.f[t - 1].transpose() * &cur;
            obs[(0, row)] += 1.0;
            d[(row, row)] = spec.gamma[t - 1];
            mean.row_mut(row).copy_from(&(spec.f[t - 1].transpose() * &m_state));
            mean.rows_mut(t * q, q).copy_from(&m_state);
            l.rows_mut(t * q, q).copy_from(&cur);
            l.row_mut(row).copy_from(&obs);
        }
        JointDlm { u: &l * d * l.transpose(), mean, q, t: t_max }
    }

    fn eta_rows(&self) -> Vec<usize> {
        (1..=self.t).map(|t| (self.t + 1) * self.q + t - 1).collect()
    }

    fn state_rows(&self, t: usize) -> Vec<usize> {
        (t * self.q..(t + 1) * self.q).collect()
    }

    /// Row mean and covariance of `rows` given the rows `given` equal `values`
    /// (one row of `values` per entry of `given`).
    fn condition(&self, rows: &[usize], given: &[usize], values: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let pick = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |i, j| self.u[(r[i], c[j])]);
        let sel = |r: &[usize]| DMatrix::from_fn(r.len(), self.mean.ncols(), |i, j| self.mean[(r[i], j)]);
        let gain = pick(rows, given) * pick(given, given).try_inverse().unwrap();
        let mean = sel(rows) + &gain * (values - sel(given));
        let cov = pick(rows, rows) - &gain * pick(given, rows);
        (mean, cov)
    }
}

// ---------------------------------------------------------------------------
// 2. collapse

fn gmcl_collapse_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, q, n) = (1 + seed as usize % 3, 1 + seed as usize % 2, 2 + seed as usize % 3);
    let hyper = GmclHyper::new(
        standard_normal_matrix(p, q, &mut rng),
        random_spd(q, &mut rng, 0.3),
        random_spd(p, &mut rng, 0.5),
        p as f64 + 3.0,
    )
    .unwrap();
    let x = standard_normal_matrix(q, n, &mut rng);
    let sigma = random_spd(p, &mut rng, 0.5);
    let t = collapse_gmcl(&hyper, &x).unwrap();
    // vec(η) = (Xᵀ ⊗ I_P) vec(Λ) + vec(E), vec(Λ) ~ N(vec Θ, Γ ⊗ Σ), vec(E) ~ N(0, I_N ⊗ Σ)
    let map = kron(&x.transpose(), &DMatrix::identity(p, p));
    let mean = &map * DVector::from_column_slice(hyper.theta.as_slice());
    let cov = &map * kron(&hyper.gamma, &sigma) * map.transpose() + kron(&DMatrix::identity(n, n), &sigma);
    let err_mean = (DVector::from_column_slice(t.mean.as_slice()) - mean).amax();
    let err_cov = (kron(&t.col_scale, &sigma) - cov).amax();
    let err_scale = (&t.row_scale - &hyper.xi).amax() + (t.upsilon - hyper.upsilon).abs();
    err_mean.max(err_cov).max(err_scale)
}

fn gmdlm_collapse_error(t: usize, q: usize, p: usize, seed: u64) -> f64 {
    let spec = random_dlm(t, q, p, seed);
    let mt = collapse_gmdlm(&spec).unwrap();
    let joint = JointDlm::new(&spec);
    let rows = joint.eta_rows();
    let mut err: f64 = 0.0;
    for i in 0..t {
        for j in 0..t {
            err = err.max((mt.col_scale[(i, j)] - joint.u[(rows[i], rows[j])]).abs());
        }
        for k in 0..p {
            err = err.max((mt.mean[(k, i)] - joint.mean[(rows[i], k)]).abs());
        }
    }
    err.max((&mt.row_scale - &spec.xi).amax())
}

fn gmcl_monte_carlo_z(draws: usize) -> f64 {
    let hyper = GmclHyper::new(
        DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 0.2, 0.8]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.6]),
        DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        12.0,
    )
    .unwrap();
    let x = DMatrix::from_row_slice(2, 3, &[1.0, -0.5, 2.0, 0.3, 1.2, -1.0]);
    let t = collapse_gmcl(&hyper, &x).unwrap();
    let e_sigma = &hyper.xi / (hyper.upsilon - 3.0);
    let targets = moment_targets(&t.mean, &kron(&t.col_scale, &e_sigma));
    let iw = InverseWishartParams::new(hyper.xi.clone(), hyper.upsilon).unwrap();
    let mut rng = RngSeed(2024).rng();
    let stats: Vec<Vec<f64>> = (0..draws)
        .map(|_| {
            let sigma = iw.sample(&mut rng).unwrap();
            let lambda = MatrixNormalParams::new(hyper.theta.clone(), sigma.clone(), hyper.gamma.clone())
                .unwrap()
                .sample(&mut rng);
            let eta = MatrixNormalParams::new(&lambda * &x, sigma, DMatrix::identity(3, 3)).unwrap().sample(&mut rng);
            moment_stats(&eta, &t.mean)
        })
        .collect();
    worst_z(&stats, &targets)
}

fn gmdlm_monte_carlo_z(draws: usize) -> f64 {
    let spec = DlmSpec { upsilon: 12.0, ..random_dlm(3, 1, 1, 7) };
    let mt = collapse_gmdlm(&spec).unwrap();
    let e_sigma = spec.xi[0] / (spec.upsilon - 2.0);
    let targets = moment_targets(&mt.mean, &(&mt.col_scale * e_sigma));
    let iw = InverseWishartParams::new(spec.xi.clone(), spec.upsilon).unwrap();
    let mut rng = RngSeed(31).rng();
    let stats: Vec<Vec<f64>> = (0..draws)
        .map(|_| {
            let sd = iw.sample(&mut rng).unwrap()[0].sqrt();
            let mut theta = spec.m0[0] + spec.c0[0].sqrt() * sd * rng.sample::<f64, _>(StandardNormal);
            let mut eta = DMatrix::zeros(1, 3);
            for t in 0..3 {
                theta = spec.g[t][0] * theta + spec.w[t][0].sqrt() * sd * rng.sample::<f64, _>(StandardNormal);
                eta[t] = spec.f[t][0] * theta + spec.gamma[t].sqrt() * sd * rng.sample::<f64, _>(StandardNormal);
            }
            moment_stats(&eta, &mt.mean)
        })
        .collect();
    worst_z(&stats, &targets)
}

fn collapse() -> Outcome {
    let gmcl = (0..6).map(gmcl_collapse_error).fold(0.0, f64::max);
    let dlm = [(1, 1, 1), (2, 2, 1), (3, 2, 2), (3, 1, 2), (3, 2, 1)]
        .iter()
        .enumerate()
        .map(|(i, &(t, q, p))| gmdlm_collapse_error(t, q, p, 100 + i as u64))
        .fold(0.0, f64::max);
    // 27 statistics per GMCL check; 10^6 draws (stricter than 10^5) keeps
    // the family-wise 3 SE band meaningful for heavy-tailed second moments.
    let z_gmcl = gmcl_monte_carlo_z(1_000_000);
    let z_dlm = gmdlm_monte_carlo_z(100_000);
    ensure(
        gmcl < 1e-8 && dlm < 1e-8 && z_gmcl <= 3.0 && z_dlm <= 3.0,
        format!(
            "Gaussian identities GMCL {gmcl:.1e}, GMDLM {dlm:.1e} (< 1e-8); Monte Carlo worst z GMCL {z_gmcl:.2}, GMDLM {z_dlm:.2} (<= 3)"
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. uncollapse

fn scalar_gmcl_z() -> f64 {
    let (theta, gamma, xi, upsilon) = (0.4, 1.5, 2.0, 5.0);
    let (x, eta) = (1.7, -0.9);
    let hyper = GmclHyper::new(
        DMatrix::from_element(1, 1, theta),
        DMatrix::from_element(1, 1, gamma),
        DMatrix::from_element(1, 1, xi),
        upsilon,
    )
    .unwrap();
    // conjugate regression: posterior precision of Λ is x² + 1/γ (per unit Σ),
    // Σ | η ~ IW(ξ + (η - θx)² / (1 + γx²), υ + 1)
    let post_mean = (x * eta + theta / gamma) / (x * x + 1.0 / gamma);
    let sigma_mean = (xi + (eta - theta * x).powi(2) / (1.0 + gamma * x * x)) / (upsilon + 1.0 - 2.0);
    let u = GmclUncollapser::new(hyper, DMatrix::from_element(1, 1, x)).unwrap();
    let e = DMatrix::from_element(1, 1, eta);
    let mut rng = RngSeed(7).rng();
    let stats: Vec<Vec<f64>> = (0..100_000)
        .map(|_| {
            let d = u.draw(&e, &mut rng).unwrap();
            vec![d.lambda[0], d.sigma[0]]
        })
        .collect();
    worst_z(&stats, &[post_mean, sigma_mean])
}

fn gmdlm_conditioning_error(t: usize, q: usize, p: usize, seed: u64) -> f64 {
    let spec = random_dlm(t, q, p, seed);
    let joint = JointDlm::new(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eta = standard_normal_matrix(p, t, &mut rng) * 2.0;
    let filt = filter_gmdlm(&eta, &spec).unwrap();
    let smooth = smooth_moments_gmdlm(&filt, &spec).unwrap();
    let uncollapser = GmdlmUncollapser::new(spec.clone()).unwrap();
    let eta_rows = joint.eta_rows();
    let mut err: f64 = 0.0;
    for step in 0..=t {
        let state = joint.state_rows(step);
        // filtering: Θ_t | η_{1:t}
        let seen = &eta_rows[..step];
        let (m, c) = if seen.is_empty() {
            (spec.m0.clone(), spec.c0.clone())
        } else {
            joint.condition(&state, seen, &eta.columns(0, step).transpose())
        };
        err = err.max((&filt.m[step] - m).amax()).max((&filt.c[step] - c).amax());
        // smoothing: Θ_t | η_{1:T}
        let (m, c) = joint.condition(&state, &eta_rows, &eta.transpose());
        err = err.max((&smooth.mean[step] - m).amax()).max((&smooth.cov[step] - c).amax());
        // backward kernel covariance: Θ_t | Θ_{t+1}, η_{1:T}
        if step < t {
            let mut given = joint.state_rows(step + 1);
            given.extend(&eta_rows);
            let values = DMatrix::zeros(given.len(), p);
            let (_, c) = joint.condition(&state, &given, &values);
            err = err.max((&uncollapser.smoothing_covariances()[step] - c).amax());
        }
    }
    err
}

fn uncollapse() -> Outcome {
    let z = scalar_gmcl_z();
    let err = [(3, 1, 1), (3, 2, 2), (3, 2, 1), (3, 1, 3)]
        .iter()
        .enumerate()
        .map(|(i, &(t, q, p))| gmdlm_conditioning_error(t, q, p, 400 + i as u64))
        .fold(0.0, f64::max);
    ensure(
        z <= 3.0 && err < 1e-8,
        format!("scalar GMCL worst z {z:.2} (<= 3 at 1e5 draws); GMDLM T=3 filter/smoother vs joint conditioning {err:.1e} (< 1e-8)"),
    )
}

// ---------------------------------------------------------------------------
// 4-6. posterior accuracy

fn laplace_vs_reference() -> Outcome {
    let data = simulate_mln(20, 3, 2, 41).unwrap();
    let min_depth = *data.y.totals().iter().min().unwrap();
    let inputs = FitInputs::new(data.y.clone(), data.x.clone()).unwrap();
    let out = fit_inputs(&inputs, &FitConfig { draws: Some(10_000), seed: Some(41), ..Default::default() }).unwrap();
    let settings = McmcSettings::default();
    let reference = mcmc_reference(&data.y, &data.x, &out.hyper, &settings, RngSeed(41).derive(8)).unwrap();
    let mean_err = (&out.report.alr.mean - &reference.lambda_mean).amax();
    let sd_rel = (&out.report.alr.sd - &reference.lambda_sd).component_div(&reference.lambda_sd).amax();
    ensure(
        min_depth >= 1000 && settings.sweeps >= 500_000 && mean_err < 0.05 && sd_rel < 0.10,
        format!(
            "D=3 N=20 Q=2, min depth {min_depth}, {} reference sweeps: max |mean diff| {mean_err:.4} (< 0.05), max sd rel diff {sd_rel:.4} (< 0.10)",
            settings.sweeps
        ),
    )
}

fn timed_cli_fit(n: usize, d: usize, q: usize, seed: u64) -> (f64, bool) {
    let dir = tempfile::tempdir().unwrap();
    simulate_mln(n, d, q, seed).unwrap().write(dir.path()).unwrap();
    let start = Instant::now();
    let fit = run_fit(
        &dir.path().join("counts.csv"),
        &dir.path().join("covariates.csv"),
        None,
        &FitConfig { draws: Some(2000), seed: Some(seed), ..Default::default() },
    )
    .unwrap();
    (start.elapsed().as_secs_f64(), fit.report.diagnostics.converged)
}

fn speed() -> Outcome {
    let (t_large, c_large) = timed_cli_fit(83, 49, 4, 5);
    let (t_base, c_base) = timed_cli_fit(100, 30, 5, 5);
    ensure(
        t_large < 30.0 && t_base < 10.0,
        format!(
            "S=2000: D=49 N=83 Q=4 {t_large:.2} s (< 30, converged {c_large}); D=30 N=100 Q=5 {t_base:.2} s (< 10, converged {c_base})"
        ),
    )
}

fn pclm_inferiority() -> Outcome {
    let (n, d, q, seed) = (100, 30, 5, 61);
    let data = simulate_mln(n, d, q, seed).unwrap();
    let inputs = FitInputs::new(data.y.clone(), data.x.clone()).unwrap();
    let config = FitConfig { draws: Some(10_000), seed: Some(seed), ..Default::default() };
    let out = fit_inputs(&inputs, &config).unwrap();
    let pclm =
        pclm_fit(&data.y, &data.x, &out.hyper, config.pseudo().unwrap(), 10_000, RngSeed(seed).derive(7)).unwrap();
    let pclm_sd =
        MatrixSummary::from_draws(&pclm.params.iter().map(|p| p.lambda.clone()).collect::<Vec<_>>()).unwrap().sd;
    let settings = McmcSettings::default();
    let reference = mcmc_reference(&data.y, &data.x, &out.hyper, &settings, RngSeed(seed).derive(8)).unwrap();
    let la = rmse_sd(&out.report.alr.sd, &reference.lambda_sd).unwrap();
    let pc = rmse_sd(&pclm_sd, &reference.lambda_sd).unwrap();
    ensure(
        pc > la,
        format!(
            "D=30 N=100 Q=5 (zero fraction {:.3}), {} reference sweeps: rmseSd PCLM {pc:.5} > CU+Laplace {la:.5}",
            data.zero_fraction(),
            settings.sweeps
        ),
    )
}

// ---------------------------------------------------------------------------
// 7-8. simulation properties

fn sparsity_trend() -> Outcome {
    let ds = [10, 30, 100, 300];
    let qs = [2, 10, 50];
    let mut zf = DMatrix::zeros(ds.len(), qs.len());
    for (i, &d) in ds.iter().enumerate() {
        for (j, &q) in qs.iter().enumerate() {
            zf[(i, j)] = (0..3).map(|s| simulate_mln(100, d, q, 70 + s).unwrap().zero_fraction()).sum::<f64>() / 3.0;
        }
    }
    let rising_d = (1..ds.len()).all(|i| (0..qs.len()).all(|j| zf[(i, j)] > zf[(i - 1, j)]));
    let rising_q = (1..qs.len()).all(|j| (0..ds.len()).all(|i| zf[(i, j)] > zf[(i, j - 1)]));
    let rows: Vec<String> = ds
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let cells: Vec<String> = zf.row(i).iter().map(|v| format!("{:.1}%", 100.0 * v)).collect();
            format!("D={d}: {}", cells.join("/"))
        })
        .collect();
    ensure(
        rising_d && rising_q,
        format!("zero % (Q=2/10/50, N=100, 3 seeds) {}; increasing in D {rising_d}, in Q {rising_q}", rows.join(", ")),
    )
}

fn calibration() -> Outcome {
    let (mut inside, mut total) = (0usize, 0usize);
    for rep in 0..50u64 {
        let seed = RngSeed(80).derive(rep).0;
        let data = simulate_mln(50, 5, 2, seed).unwrap();
        let inputs = FitInputs::new(data.y.clone(), data.x.clone()).unwrap();
        let out = fit_inputs(&inputs, &FitConfig { seed: Some(seed), ..Default::default() }).unwrap();
        let truth = &data.truth.as_ref().unwrap().lambda;
        let s = &out.report.alr;
        for k in 0..truth.len() {
            total += 1;
            if s.lower[k] <= truth[k] && truth[k] <= s.upper[k] {
                inside += 1;
            }
        }
    }
    let coverage = inside as f64 / total as f64;
    ensure(
        (coverage - 0.95).abs() <= 0.05,
        format!(
            "50 replicates D=5 N=50 Q=2: 95% interval coverage {coverage:.4} ({inside}/{total}), target 0.95 +/- 0.05"
        ),
    )
}

// ---------------------------------------------------------------------------

/// Name, check, runtime budget in seconds.
type Criterion = (&'static str, fn() -> Outcome, u64);

fn main() {
    let criteria: [Criterion; 8] = [
        ("derivative correctness", derivatives, 30),
        ("collapse identities", collapse, 120),
        ("uncollapse correctness", uncollapse, 120),
        ("Laplace vs reference MCMC", laplace_vs_reference, 900),
        ("speed", speed, 120),
        ("PCLM inferiority", pclm_inferiority, 1800),
        ("sparsity trend", sparsity_trend, 120),
        ("calibration", calibration, 600),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let number = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == number || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > Duration::from_secs(*budget) => {
                Err(format!("{detail}; runtime {:.1} s over the {budget} s budget", elapsed.as_secs_f64()))
            }
            other => other,
        };
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("{status} criterion {number} ({name}): {detail} [{:.1} s]", elapsed.as_secs_f64());
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
