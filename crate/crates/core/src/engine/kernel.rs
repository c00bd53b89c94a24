use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `α² exp(-(t - s)² / ρ²)` over `points`, with `1e-10·α²` of diagonal jitter.
pub fn rbf_kernel(points: &[f64], alpha: f64, rho: f64) -> Result<DMatrix<f64>> {
    if !(alpha > 0.0) || !(rho > 0.0) || !alpha.is_finite() || !rho.is_finite() {
        return Err(Error::Parameter(format!("rbf kernel needs alpha > 0 and rho > 0, got {alpha}, {rho}")));
    }
    let a2 = alpha * alpha;
    let n = points.len();
    let mut k = DMatrix::from_fn(n, n, |i, j| {
        let d = points[i] - points[j];
        a2 * (-(d * d) / (rho * rho)).exp()
    });
    for i in 0..n {
        k[(i, i)] += 1e-10 * a2;
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_example() {
        let k = rbf_kernel(&[0.0, 1.0], 1.0, 1.0).unwrap();
        assert!((k[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(k[(0, 1)], k[(1, 0)]);
        assert!((k[(0, 0)] - 1.0).abs() <= 1e-10 + 1e-16);
    }

    #[test]
    fn decays_with_distance_and_is_positive_definite() {
        let pts: Vec<f64> = (0..12).map(|t| t as f64).collect();
        let k = rbf_kernel(&pts, 2.0, 3.0).unwrap();
        for j in 1..12 {
            assert!(k[(0, j)] < k[(0, j - 1)]);
        }
        assert!((k[(5, 5)] - 4.0).abs() < 1e-8);
        assert!(k.cholesky().is_some());
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(rbf_kernel(&[0.0], 0.0, 1.0).is_err());
        assert!(rbf_kernel(&[0.0], 1.0, -1.0).is_err());
    }
}
