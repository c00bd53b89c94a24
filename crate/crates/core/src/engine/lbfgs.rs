//! Limited-memory BFGS with a bracketing strong-Wolfe line search.
//!
//! Large objectives (sums of thousands of terms) lose the ability to resolve
//! tiny decreases long before the gradient is small. The line search therefore
//! also accepts a step satisfying the approximate Wolfe conditions, where the
//! decrease test only asks that the value not rise beyond rounding noise.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsSettings {
    pub memory: usize,
    pub grad_tol: f64,
    pub rel_fun_tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    FunctionTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Objective at the start and after each accepted step.
    pub trace: Vec<f64>,
}

impl LbfgsResult {
    pub fn grad_sup_norm(&self) -> f64 {
        self.gradient.amax()
    }
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
/// Relative rounding allowance on objective values.
const NOISE: f64 = 16.0 * f64::EPSILON;
const MAX_LINE_EVALS: usize = 40;
/// The function-tolerance stop needs both an objective change within the
/// relative tolerance and no new minimum of the gradient sup-norm over this
/// many steps. Tiny relative changes alone are routine on large, sharply
/// peaked objectives while the gradient is still falling.
const STALL_STEPS: usize = 50;

struct Point {
    alpha: f64,
    value: f64,
    slope: f64,
    x: DVector<f64>,
    grad: DVector<f64>,
}

struct LineSearch<'a, F> {
    f: &'a mut F,
    x0: &'a DVector<f64>,
    dir: &'a DVector<f64>,
    f0: f64,
    d0: f64,
    noise: f64,
    evals: usize,
}

impl<F> LineSearch<'_, F>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    fn eval(&mut self, alpha: f64) -> Result<Point> {
        let x = self.x0 + self.dir * alpha;
        let (value, grad) = (self.f)(&x)?;
        self.evals += 1;
        let slope = if value.is_finite() { grad.dot(self.dir) } else { f64::NAN };
        Ok(Point { alpha, value, slope, x, grad })
    }

    fn sufficient_decrease(&self, p: &Point) -> bool {
        p.value.is_finite()
            && (p.value <= self.f0 + C1 * p.alpha * self.d0
                || (p.value <= self.f0 + self.noise && p.slope <= (1.0 - 2.0 * C1) * self.d0.abs()))
    }

    fn curvature(&self, p: &Point) -> bool {
        p.slope.abs() <= C2 * self.d0.abs()
    }

    fn search(&mut self, alpha0: f64) -> Result<Option<Point>> {
        let mut prev =
            Point { alpha: 0.0, value: self.f0, slope: self.d0, x: self.x0.clone(), grad: DVector::zeros(0) };
        let mut alpha = alpha0;
        for i in 0..MAX_LINE_EVALS {
            let cur = self.eval(alpha)?;
            if !cur.value.is_finite() {
                // step left the domain; shrink toward the last good point
                alpha = prev.alpha + 0.25 * (alpha - prev.alpha);
                continue;
            }
            if !self.sufficient_decrease(&cur) || (i > 0 && cur.value > prev.value + self.noise) {
                return self.zoom(prev, cur);
            }
            if self.curvature(&cur) {
                return Ok(Some(cur));
            }
            if cur.slope >= 0.0 {
                return self.zoom(cur, prev);
            }
            let next = alpha * 2.5;
            prev = cur;
            alpha = next;
            if self.evals >= MAX_LINE_EVALS {
                break;
            }
        }
        Ok(None)
    }

    /// `lo` satisfies sufficient decrease and has the lowest value seen.
    fn zoom(&mut self, mut lo: Point, mut hi: Point) -> Result<Option<Point>> {
        while self.evals < MAX_LINE_EVALS {
            let alpha = interpolate(&lo, &hi);
            let cur = self.eval(alpha)?;
            if !self.sufficient_decrease(&cur) || cur.value > lo.value + self.noise {
                hi = cur;
            } else {
                if self.curvature(&cur) {
                    return Ok(Some(cur));
                }
                if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = std::mem::replace(&mut lo, cur);
                } else {
                    lo = cur;
                }
            }
            if (hi.alpha - lo.alpha).abs() <= 1e-14 * lo.alpha.abs().max(1e-300) {
                break;
            }
        }
        // fall back to the best point if it made progress
        if lo.alpha > 0.0 && lo.value < self.f0 {
            return Ok(Some(lo));
        }
        Ok(None)
    }
}

/// Cubic interpolation from values and slopes, safeguarded to the interior.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let width = b - a;
    let mid = a + 0.5 * width;
    if !hi.value.is_finite() || !hi.slope.is_finite() {
        return a + 0.2 * width;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if disc < 0.0 {
        return mid;
    }
    let d2 = disc.sqrt().copysign(b - a);
    let t = b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    if !t.is_finite() {
        return mid;
    }
    let (left, right) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (right - left);
    if t < left + margin || t > right - margin {
        mid
    } else {
        t
    }
}

/// Minimizes `f`, which returns the value and gradient.
pub fn minimize<F>(f: F, x0: DVector<f64>, settings: &LbfgsSettings) -> Result<LbfgsResult>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    minimize_scaled(f, x0, settings, None)
}

/// [`minimize`] with a diagonal preconditioner: `curvature` is a positive
/// estimate of the Hessian diagonal, used as the initial inverse Hessian
/// `γ·diag(curvature)⁻¹` of every two-loop recursion.
pub fn minimize_scaled<F>(
    mut f: F,
    x0: DVector<f64>,
    settings: &LbfgsSettings,
    curvature: Option<&DVector<f64>>,
) -> Result<LbfgsResult>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let inv_diag = match curvature {
        Some(c) => {
            if c.len() != x0.len() || c.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::Parameter("preconditioner must be positive and match the dimension".into()));
            }
            Some(c.map(|v| 1.0 / v))
        }
        None => None,
    };
    let steepest = |g: &DVector<f64>| -> (DVector<f64>, f64) {
        match &inv_diag {
            Some(h) => (-g.component_mul(h), 1.0),
            None => {
                let d = -g;
                let a = (1.0 / d.norm()).min(1.0);
                (d, a)
            }
        }
    };
    let (mut value, mut grad) = f(&x0)?;
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Initialization(format!("objective is not finite at the starting point ({value})")));
    }
    let mut x = x0;
    let mut evaluations = 1;
    let mut trace = vec![value];
    let mut history: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::with_capacity(settings.memory);
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;
    let mut since_best = 0;
    let mut best_gnorm = grad.amax();

    while iterations < settings.max_iter {
        if grad.amax() <= settings.grad_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        let (mut dir, mut alpha0) =
            if history.is_empty() { steepest(&grad) } else { (two_loop(&grad, &history, inv_diag.as_ref()), 1.0) };
        let mut d0 = grad.dot(&dir);
        if !(d0 < 0.0) {
            history.clear();
            (dir, alpha0) = steepest(&grad);
            d0 = grad.dot(&dir);
        }
        let mut found = run_line_search(&mut f, &x, &dir, value, d0, alpha0, &mut evaluations)?;
        if found.is_none() && !history.is_empty() {
            history.clear();
            (dir, alpha0) = steepest(&grad);
            d0 = grad.dot(&dir);
            found = run_line_search(&mut f, &x, &dir, value, d0, alpha0, &mut evaluations)?;
        }
        let Some(step) = found else {
            termination = Termination::LineSearchFailed;
            break;
        };
        iterations += 1;
        let s = &step.x - &x;
        let y = &step.grad - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if history.len() == settings.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let old = value;
        x = step.x;
        value = step.value;
        grad = step.grad;
        trace.push(value);
        if grad.amax() <= settings.grad_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        let gnorm = grad.amax();
        if gnorm < best_gnorm {
            best_gnorm = gnorm;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if (old - value).abs() <= settings.rel_fun_tol * old.abs().max(1.0) && since_best >= STALL_STEPS {
            termination = Termination::FunctionTolerance;
            break;
        }
    }
    Ok(LbfgsResult { x, value, gradient: grad, iterations, evaluations, termination, trace })
}

fn run_line_search<F>(
    f: &mut F,
    x: &DVector<f64>,
    dir: &DVector<f64>,
    f0: f64,
    d0: f64,
    alpha0: f64,
    evaluations: &mut usize,
) -> Result<Option<Point>>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let mut ls = LineSearch { f, x0: x, dir, f0, d0, noise: NOISE * (f0.abs() + 1.0), evals: 0 };
    let out = ls.search(alpha0);
    *evaluations += ls.evals;
    out
}

fn two_loop(
    grad: &DVector<f64>,
    history: &VecDeque<(DVector<f64>, DVector<f64>, f64)>,
    inv_diag: Option<&DVector<f64>>,
) -> DVector<f64> {
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * s.dot(&q);
        q.axpy(-a, y, 1.0);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        match inv_diag {
            Some(h) => {
                let hy = y.component_mul(h);
                q = q.component_mul(h) * (s.dot(y) / y.dot(&hy));
            }
            None => q *= s.dot(y) / y.dot(y),
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&q);
        q.axpy(a - b, s, 1.0);
    }
    -q
}
