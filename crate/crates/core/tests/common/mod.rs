#![allow(dead_code)]

use nalgebra::DMatrix;

/// Sample mean of each statistic and its standard error.
pub struct Moments {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

/// `stats[s][k]` is statistic `k` of draw `s`.
pub fn moments(stats: &[Vec<f64>]) -> Moments {
    let n = stats.len() as f64;
    let k = stats[0].len();
    let mut mean = vec![0.0; k];
    for row in stats {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; k];
    for row in stats {
        for ((acc, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *acc += (v - m).powi(2) / (n - 1.0);
        }
    }
    let se = var.iter().map(|v| (v / n).sqrt()).collect();
    Moments { mean, se }
}

/// Panics with the offending index when any mean is more than `k` standard
/// errors from its target.
pub fn assert_within_se(what: &str, m: &Moments, target: &[f64], k: f64) {
    for (i, ((mean, se), t)) in m.mean.iter().zip(&m.se).zip(target).enumerate() {
        let z = (mean - t) / se;
        assert!(z.abs() <= k, "{what}[{i}]: mean {mean} target {t} ({z:.2} se)");
    }
}

/// First and second moments of `vec(x)`: the entries followed by the upper
/// triangle of the outer product of `vec(x) - center`.
pub fn vec_moment_stats(x: &DMatrix<f64>, center: &DMatrix<f64>) -> Vec<f64> {
    let c = x - center;
    let d = c.len();
    let mut out: Vec<f64> = x.iter().copied().collect();
    for i in 0..d {
        for j in i..d {
            out.push(c[i] * c[j]);
        }
    }
    out
}

pub fn vec_moment_targets(mean: &DMatrix<f64>, cov: &DMatrix<f64>) -> Vec<f64> {
    let d = mean.len();
    let mut out: Vec<f64> = mean.iter().copied().collect();
    for i in 0..d {
        for j in i..d {
            out.push(cov[(i, j)]);
        }
    }
    out
}
