//! Python bindings. Matrices cross the boundary as lists of rows, so NumPy
//! arrays work on input and `numpy.array` recovers them on output.

use mlnltp::engine::{build_laplace, map_estimate, sample_laplace, InitStrategy, LaplaceFit, OptimizerConfig};
use mlnltp::gmcl::{collapse_gmcl, GmclHyper, GmclUncollapser};
use mlnltp::matvar::{log_density_matrix_t, sample_matrix_t};
use mlnltp::mln::{alr_inverse, multinom_log_lik};
use mlnltp::{cu_sample, CountMatrix, Error, LtpModel, MatrixTParams, RngSeed};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Rows = Vec<Vec<f64>>;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Parameter(_) | Error::Dimension(_) | Error::Domain(_) => PyValueError::new_err(e.to_string()),
        _ => PyArithmeticError::new_err(e.to_string()),
    }
}

fn matrix(rows: &Rows, name: &str) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(PyValueError::new_err(format!("{name} is empty")));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!("{name} has ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn counts(table: &Rows) -> PyResult<CountMatrix> {
    CountMatrix::from_f64(&matrix(table, "counts")?).map_err(to_py_err)
}

/// Matrix-t distribution `T(υ, B, K, A)` over `P×N` matrices.
#[pyclass(name = "MatrixT", frozen)]
struct PyMatrixT(MatrixTParams);

#[pymethods]
impl PyMatrixT {
    #[new]
    fn new(upsilon: f64, mean: Rows, row_scale: Rows, col_scale: Rows) -> PyResult<Self> {
        let params = MatrixTParams::new(
            upsilon,
            matrix(&mean, "mean")?,
            matrix(&row_scale, "row_scale")?,
            matrix(&col_scale, "col_scale")?,
        )
        .map_err(to_py_err)?;
        Ok(PyMatrixT(params))
    }

    #[getter]
    fn upsilon(&self) -> f64 {
        self.0.upsilon
    }

    #[getter]
    fn mean(&self) -> Rows {
        rows(&self.0.mean)
    }

    #[getter]
    fn row_scale(&self) -> Rows {
        rows(&self.0.row_scale)
    }

    #[getter]
    fn col_scale(&self) -> Rows {
        rows(&self.0.col_scale)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.rows(), self.0.cols())
    }

    fn log_density(&self, x: Rows) -> PyResult<f64> {
        log_density_matrix_t(&matrix(&x, "x")?, &self.0).map_err(to_py_err)
    }

    fn sample(&self, seed: u64) -> PyResult<Rows> {
        sample_matrix_t(&self.0, RngSeed(seed)).map(|m| rows(&m)).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("MatrixT(upsilon={}, shape={:?})", self.0.upsilon, self.0.mean.shape())
    }
}

/// Hyperparameters of the multinomial logistic-normal linear model:
/// `Λ ~ MN(Θ, Σ, Γ)`, `Σ ~ IW(Ξ, υ)`.
#[pyclass(name = "GmclHyper", frozen)]
struct PyGmclHyper(GmclHyper);

#[pymethods]
impl PyGmclHyper {
    #[new]
    fn new(theta: Rows, gamma: Rows, xi: Rows, upsilon: f64) -> PyResult<Self> {
        let hyper = GmclHyper::new(matrix(&theta, "theta")?, matrix(&gamma, "gamma")?, matrix(&xi, "xi")?, upsilon)
            .map_err(to_py_err)?;
        Ok(PyGmclHyper(hyper))
    }

    /// Default prior for `D` categories and `Q` covariates: `Θ = 0`, `Γ = I`,
    /// `υ = D + 3`, `Ξ = ((υ - D) / 2) · (I + 1 1ᵀ)` in ALR coordinates.
    #[staticmethod]
    fn default_for(d: usize, q: usize) -> PyResult<Self> {
        if d < 2 || q == 0 {
            return Err(PyValueError::new_err("need at least 2 categories and 1 covariate"));
        }
        let p = d - 1;
        let upsilon = d as f64 + 3.0;
        let xi = (DMatrix::identity(p, p) + DMatrix::from_element(p, p, 1.0)) * ((upsilon - d as f64) / 2.0);
        let hyper = GmclHyper::new(DMatrix::zeros(p, q), DMatrix::identity(q, q), xi, upsilon).map_err(to_py_err)?;
        Ok(PyGmclHyper(hyper))
    }

    /// Matrix-t prior on `η` after integrating out `Λ` and `Σ` for design `x`.
    fn collapse(&self, x: Rows) -> PyResult<PyMatrixT> {
        collapse_gmcl(&self.0, &matrix(&x, "x")?).map(PyMatrixT).map_err(to_py_err)
    }

    #[getter]
    fn upsilon(&self) -> f64 {
        self.0.upsilon
    }

    #[getter]
    fn theta(&self) -> Rows {
        rows(&self.0.theta)
    }

    #[getter]
    fn gamma(&self) -> Rows {
        rows(&self.0.gamma)
    }

    #[getter]
    fn xi(&self) -> Rows {
        rows(&self.0.xi)
    }
}

/// Posterior mode of `η` and its Laplace approximation.
#[pyclass(name = "LaplaceFit", frozen)]
struct PyLaplaceFit(LaplaceFit);

#[pymethods]
impl PyLaplaceFit {
    #[getter]
    fn eta_hat(&self) -> Rows {
        rows(&self.0.eta_hat)
    }

    #[getter]
    fn converged(&self) -> bool {
        self.0.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations
    }

    #[getter]
    fn grad_sup_norm(&self) -> f64 {
        self.0.grad_sup_norm
    }

    #[getter]
    fn log_post_at_mode(&self) -> f64 {
        self.0.log_post_at_mode
    }

    #[getter]
    fn clipped(&self) -> bool {
        self.0.clipped()
    }

    fn sample(&self, draws: usize, seed: u64) -> PyResult<Vec<Rows>> {
        let etas = sample_laplace(&self.0, draws, RngSeed(seed)).map_err(to_py_err)?;
        Ok(etas.iter().map(rows).collect())
    }
}

fn optimizer_config(pseudo: f64, grad_tol: f64, max_iter: usize) -> OptimizerConfig {
    OptimizerConfig { grad_tol, max_iter, init: InitStrategy::PseudoCountAlr { pseudo }, ..Default::default() }
}

/// Multinomial counts (`D×N`) under a matrix-t prior on their ALR log-ratios.
#[pyclass(name = "LtpModel", frozen)]
struct PyLtpModel(LtpModel);

#[pymethods]
impl PyLtpModel {
    #[new]
    fn new(counts_table: Rows, prior: &PyMatrixT) -> PyResult<Self> {
        LtpModel::new(counts(&counts_table)?, prior.0.clone()).map(PyLtpModel).map_err(to_py_err)
    }

    /// Negative log collapsed posterior, up to constants.
    fn objective(&self, eta: Rows) -> PyResult<f64> {
        self.0.objective(&matrix(&eta, "eta")?).map_err(to_py_err)
    }

    fn gradient(&self, eta: Rows) -> PyResult<Rows> {
        let (_, g) = self.0.objective_and_gradient(&matrix(&eta, "eta")?).map_err(to_py_err)?;
        Ok(rows(&g))
    }

    #[pyo3(signature = (pseudo = 0.5, grad_tol = 1e-4, max_iter = 10_000))]
    fn laplace(&self, pseudo: f64, grad_tol: f64, max_iter: usize) -> PyResult<PyLaplaceFit> {
        let config = optimizer_config(pseudo, grad_tol, max_iter);
        let fit = map_estimate(&self.0, &config).map_err(to_py_err)?;
        build_laplace(fit, &self.0, config.clip_ratio).map(PyLaplaceFit).map_err(to_py_err)
    }
}

/// Collapse-uncollapse posterior draws of `(η, Λ, Σ)` for counts `counts_table`
/// (`D×N`) and design `x` (`Q×N`). Returns a dict of draw lists plus the fit.
#[pyfunction]
#[pyo3(signature = (counts_table, x, hyper, draws = 2000, seed = 0, pseudo = 0.5))]
fn fit_gmcl<'py>(
    py: Python<'py>,
    counts_table: Rows,
    x: Rows,
    hyper: &PyGmclHyper,
    draws: usize,
    seed: u64,
    pseudo: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let y = counts(&counts_table)?;
    let x = matrix(&x, "x")?;
    let prior = collapse_gmcl(&hyper.0, &x).map_err(to_py_err)?;
    let model = LtpModel::new(y, prior).map_err(to_py_err)?;
    let uncollapser = GmclUncollapser::new(hyper.0.clone(), x).map_err(to_py_err)?;
    let config = optimizer_config(pseudo, 1e-4, 10_000);
    let post = py.detach(|| cu_sample(&model, &uncollapser, draws, &config, RngSeed(seed))).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("eta", post.eta.iter().map(rows).collect::<Vec<_>>())?;
    out.set_item("lambda", post.params.iter().map(|d| rows(&d.lambda)).collect::<Vec<_>>())?;
    out.set_item("sigma", post.params.iter().map(|d| rows(&d.sigma)).collect::<Vec<_>>())?;
    out.set_item("fit", PyLaplaceFit(post.fit))?;
    Ok(out)
}

/// Multinomial log-likelihood of counts (`D×N`) at ALR log-ratios `eta`, up to
/// the multinomial coefficient.
#[pyfunction]
fn multinomial_log_lik(counts_table: Rows, eta: Rows) -> PyResult<f64> {
    multinom_log_lik(&counts(&counts_table)?, &matrix(&eta, "eta")?).map_err(to_py_err)
}

/// Column-wise inverse ALR: `P×N` log-ratios to `(P+1)×N` proportions.
#[pyfunction]
fn proportions(eta: Rows) -> PyResult<Rows> {
    Ok(rows(&alr_inverse(&matrix(&eta, "eta")?)))
}

#[pymodule]
#[pyo3(name = "mlnltp")]
fn mlnltp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMatrixT>()?;
    m.add_class::<PyGmclHyper>()?;
    m.add_class::<PyLtpModel>()?;
    m.add_class::<PyLaplaceFit>()?;
    m.add_function(wrap_pyfunction!(fit_gmcl, m)?)?;
    m.add_function(wrap_pyfunction!(multinomial_log_lik, m)?)?;
    m.add_function(wrap_pyfunction!(proportions, m)?)?;
    Ok(())
}
