mod common;

use common::{assert_within_se, moments, vec_moment_stats, vec_moment_targets};
use mlnltp::gmcl::{collapse_gmcl, uncollapse_point_gmcl, GmclHyper, GmclUncollapser};
use mlnltp::linalg::{kron, standard_normal_matrix};
use mlnltp::matvar::{InverseWishartParams, MatrixNormalParams};
use mlnltp::RngSeed;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::rngs::ChaCha8Rng;
use rand::SeedableRng;

const DRAWS: usize = 100_000;

fn hyper_2x2(upsilon: f64) -> GmclHyper {
    GmclHyper::new(
        DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 0.2, 0.8]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.6]),
        DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        upsilon,
    )
    .unwrap()
}

#[test]
fn hierarchical_simulation_matches_collapsed_matrix_t() {
    let hyper = hyper_2x2(12.0);
    let x = DMatrix::from_row_slice(2, 3, &[1.0, -0.5, 2.0, 0.3, 1.2, -1.0]);
    let t = collapse_gmcl(&hyper, &x).unwrap();
    let e_sigma = &hyper.xi / (hyper.upsilon - 3.0);
    let cov = kron(&t.col_scale, &e_sigma);
    let targets = vec_moment_targets(&t.mean, &cov);
    let iw = InverseWishartParams::new(hyper.xi.clone(), hyper.upsilon).unwrap();

    // 27 heavy-tailed statistics per sampler; 10^6 draws keeps the 3 SE
    // band meaningful for the second moments.
    let draws = 10 * DRAWS;
    let mut rng = RngSeed(2024).rng();
    let hierarchical: Vec<Vec<f64>> = (0..draws)
        .map(|_| {
            let sigma = iw.sample(&mut rng).unwrap();
            let lambda = MatrixNormalParams::new(hyper.theta.clone(), sigma.clone(), hyper.gamma.clone())
                .unwrap()
                .sample(&mut rng);
            let eta = MatrixNormalParams::new(&lambda * &x, sigma, DMatrix::identity(3, 3)).unwrap().sample(&mut rng);
            vec_moment_stats(&eta, &t.mean)
        })
        .collect();
    assert_within_se("hierarchical", &moments(&hierarchical), &targets, 3.0);

    let mut rng = RngSeed(2025).rng();
    let collapsed: Vec<Vec<f64>> =
        (0..draws).map(|_| vec_moment_stats(&t.sample(&mut rng).unwrap(), &t.mean)).collect();
    assert_within_se("collapsed", &moments(&collapsed), &targets, 3.0);
}

#[test]
fn scalar_posterior_mean_matches_conjugate_regression() {
    let (theta, gamma, xi, upsilon) = (0.4, 1.5, 2.0, 5.0);
    let (x, eta) = (1.7, -0.9);
    let hyper = GmclHyper::new(
        DMatrix::from_element(1, 1, theta),
        DMatrix::from_element(1, 1, gamma),
        DMatrix::from_element(1, 1, xi),
        upsilon,
    )
    .unwrap();
    // normal-inverse-gamma regression: posterior precision x² + 1/γ
    let post_mean = (x * eta + theta / gamma) / (x * x + 1.0 / gamma);
    let u = GmclUncollapser::new(hyper, DMatrix::from_element(1, 1, x)).unwrap();
    let e = DMatrix::from_element(1, 1, eta);
    let mut rng = RngSeed(7).rng();
    let draws: Vec<Vec<f64>> = (0..DRAWS).map(|_| vec![u.draw(&e, &mut rng).unwrap().lambda[0]]).collect();
    assert_within_se("lambda", &moments(&draws), &[post_mean], 3.0);
}

#[test]
fn point_estimate_is_the_conditional_mean() {
    let hyper = hyper_2x2(6.0);
    let x = DMatrix::from_row_slice(2, 5, &[1.0, -0.5, 2.0, 0.3, 0.0, 1.2, -1.0, 0.4, 0.7, 1.0]);
    let eta = DMatrix::from_row_slice(2, 5, &[0.3, 1.1, -0.4, 2.0, 0.0, -1.0, 0.5, 0.5, 1.5, -2.0]);
    let (lambda_n, sigma_mean) = uncollapse_point_gmcl(&eta, &x, &hyper).unwrap();
    let u = GmclUncollapser::new(hyper, x).unwrap();
    let mut rng = RngSeed(11).rng();
    let stats: Vec<Vec<f64>> = (0..DRAWS)
        .map(|_| {
            let d = u.draw(&eta, &mut rng).unwrap();
            d.lambda.iter().chain(d.sigma.iter()).copied().collect()
        })
        .collect();
    let target: Vec<f64> = lambda_n.iter().chain(sigma_mean.iter()).copied().collect();
    assert_within_se("point", &moments(&stats), &target, 3.0);
}

#[test]
fn prior_draws_survive_collapse_then_uncollapse() {
    let hyper = hyper_2x2(10.0);
    let x = DMatrix::from_row_slice(2, 4, &[1.0, -0.5, 2.0, 0.3, 1.2, -1.0, 0.4, 0.7]);
    let t = collapse_gmcl(&hyper, &x).unwrap();
    let u = GmclUncollapser::new(hyper.clone(), x).unwrap();
    let mut rng = RngSeed(5).rng();
    let stats: Vec<Vec<f64>> = (0..DRAWS)
        .map(|_| {
            let eta = t.sample(&mut rng).unwrap();
            let d = u.draw(&eta, &mut rng).unwrap();
            d.lambda.iter().chain(d.sigma.iter()).copied().collect()
        })
        .collect();
    let sigma_mean = &hyper.xi / (hyper.upsilon - 3.0);
    let target: Vec<f64> = hyper.theta.iter().chain(sigma_mean.iter()).copied().collect();
    assert_within_se("prior", &moments(&stats), &target, 3.0);
}

#[test]
fn posterior_params_ignore_sample_order() {
    let hyper = hyper_2x2(6.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = standard_normal_matrix(2, 6, &mut rng);
    let eta = standard_normal_matrix(2, 6, &mut rng);
    let perm = [4, 0, 5, 2, 1, 3];
    let xp = DMatrix::from_fn(2, 6, |i, j| x[(i, perm[j])]);
    let ep = DMatrix::from_fn(2, 6, |i, j| eta[(i, perm[j])]);
    let a = GmclUncollapser::new(hyper.clone(), x).unwrap().posterior_params(&eta).unwrap();
    let b = GmclUncollapser::new(hyper, xp).unwrap().posterior_params(&ep).unwrap();
    assert!((a.lambda_n - b.lambda_n).amax() < 1e-12);
    assert!((a.xi_n - b.xi_n).amax() < 1e-12);
    assert!((a.gamma_n - b.gamma_n).amax() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_covariances_stay_positive_definite(
        p in 1usize..5, q in 1usize..4, n in 0usize..8, seed in 0u64..100_000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = standard_normal_matrix(q, q, &mut rng);
        let hyper = GmclHyper::new(
            standard_normal_matrix(p, q, &mut rng),
            &g * g.transpose() + DMatrix::identity(q, q) * 0.1,
            DMatrix::identity(p, p),
            p as f64 + 2.0,
        ).unwrap();
        let x = standard_normal_matrix(q, n, &mut rng) * 3.0;
        let eta = standard_normal_matrix(p, n, &mut rng) * 5.0;
        let post = GmclUncollapser::new(hyper, x).unwrap().posterior_params(&eta).unwrap();
        prop_assert!(post.gamma_n.clone().cholesky().is_some());
        prop_assert!(post.xi_n.clone().cholesky().is_some());
        prop_assert_eq!(post.gamma_n.clone(), post.gamma_n.transpose());
        prop_assert_eq!(post.xi_n.clone(), post.xi_n.transpose());
    }
}
