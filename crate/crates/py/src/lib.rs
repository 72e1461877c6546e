//! Python bindings. Results come back as plain Python objects (dicts, lists,
//! floats) built from the JSON form of the Rust reports.

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use ::tma::analytics;
use ::tma::estimate;
use ::tma::stationary::{self, default_burn_in};
use ::tma::verify::{self as check, VerifyConfig};
use ::tma::{Innovation as CoreInnovation, Method, TmaError, TmaModel, Truncation};

fn err(e: TmaError) -> PyErr {
    match e {
        TmaError::DeltaTooClose { .. } | TmaError::Degenerate(_) => PyArithmeticError::new_err(e.to_string()),
        TmaError::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Innovation law: `Innovation("normal")`, `Innovation("student_t", 5.0)`,
/// `Innovation("laplace", 1.0)`, `Innovation("scaled_normal", 2.0)`.
#[pyclass(frozen, from_py_object, name = "Innovation", module = "tma")]
#[derive(Clone)]
struct PyInnovation(CoreInnovation);

#[pymethods]
impl PyInnovation {
    #[new]
    #[pyo3(signature = (kind = "normal", param = None))]
    fn new(kind: &str, param: Option<f64>) -> PyResult<Self> {
        let need = |p: Option<f64>| p.ok_or_else(|| PyValueError::new_err(format!("'{kind}' needs a parameter")));
        let inner = match kind {
            "normal" => CoreInnovation::StandardNormal,
            "student_t" => CoreInnovation::student_t(need(param)?).map_err(err)?,
            "laplace" => CoreInnovation::laplace(need(param)?).map_err(err)?,
            "scaled_normal" => CoreInnovation::scaled_normal(need(param)?).map_err(err)?,
            other => return Err(PyValueError::new_err(format!("unknown innovation kind '{other}'"))),
        };
        Ok(PyInnovation(inner))
    }

    fn cdf(&self, x: f64) -> f64 {
        self.0.cdf(x)
    }

    fn density(&self, x: f64) -> f64 {
        self.0.density(x)
    }

    fn partial_first_moment(&self, c: f64) -> PyResult<f64> {
        self.0.partial_first_moment(c).map_err(err)
    }

    fn raw_moment(&self, order: u32) -> PyResult<f64> {
        self.0.raw_moment(order).map_err(err)
    }

    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        ::tma::noise::sample(&self.0, n, seed)
    }

    fn __repr__(&self) -> String {
        format!("Innovation({:?})", self.0)
    }
}

#[pyclass(frozen, name = "Model", module = "tma")]
struct PyModel(TmaModel);

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (mu1, mu2, phi, psi, d, r, innovation = None))]
    fn new(
        mu1: f64,
        mu2: f64,
        phi: Vec<f64>,
        psi: Vec<f64>,
        d: usize,
        r: f64,
        innovation: Option<PyInnovation>,
    ) -> PyResult<Self> {
        let inn = innovation.map_or(CoreInnovation::StandardNormal, |i| i.0);
        TmaModel::new(mu1, mu2, phi, psi, d, r, inn).map(PyModel).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        TmaModel::from_json_str(text).map(PyModel).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        TmaModel::from_path(path).map(PyModel).map_err(err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    fn hash(&self) -> String {
        self.0.hash()
    }

    #[getter]
    fn q(&self) -> usize {
        self.0.q()
    }

    #[getter]
    fn d(&self) -> usize {
        self.0.d()
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m()
    }

    #[getter]
    fn r(&self) -> f64 {
        self.0.r()
    }

    #[pyo3(signature = (samples = 1_000_000, seed = 1))]
    fn contraction_delta<'py>(&self, py: Python<'py>, samples: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let d = self.0.contraction_delta(samples, seed).map_err(err)?;
        to_py(py, &d)
    }

    /// Simulated path as a dict with `index`, `e`, `y` and, for the closed
    /// form, `alpha`.
    #[pyo3(signature = (n, seed = 1, method = "recursive", burn_in = None, init = None))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        n: usize,
        seed: u64,
        method: &str,
        burn_in: Option<usize>,
        init: Option<Vec<f64>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let path = simulate_path(&self.0, n, seed, method, burn_in, init)?;
        let index: Vec<i64> = (0..path.len()).map(|i| path.start + i as i64).collect();
        let e: Vec<f64> = (0..path.len()).map(|i| path.innovation_at(i)).collect();
        let body = serde_json::json!({
            "index": index,
            "e": e,
            "y": path.values,
            "alpha": path.alpha,
            "burn_in": path.burn_in,
            "seed": path.seed,
            "method": path.method.to_string(),
            "model_hash": path.model_hash,
        });
        to_py(py, &body)
    }

    fn __repr__(&self) -> String {
        format!("Model({})", self.0.to_json())
    }
}

fn simulate_path(
    model: &TmaModel,
    n: usize,
    seed: u64,
    method: &str,
    burn_in: Option<usize>,
    init: Option<Vec<f64>>,
) -> PyResult<::tma::SeriesPath> {
    let method: Method = method.parse().map_err(err)?;
    let delta = model
        .contraction_delta(::tma::model::DEFAULT_DELTA_SAMPLES, seed)
        .map_err(err)?;
    let burn_in = burn_in.unwrap_or_else(|| default_burn_in(model.m(), delta.delta));
    match method {
        Method::Recursive => {
            let init = init.unwrap_or_else(|| vec![0.0; model.init_len()]);
            stationary::simulate_recursive(model, n, burn_in, &init, seed).map_err(err)
        }
        Method::ClosedForm => {
            let trunc = Truncation::default_for(model, &delta).map_err(err)?;
            stationary::simulate_closed_form_offset(model, burn_in, n, &trunc, seed).map_err(err)
        }
    }
}

/// Closed-form ACF `ρ_0 … ρ_max_lag` where one exists, else `None`.
#[pyfunction]
#[pyo3(signature = (model, max_lag = 20, seed = 1))]
fn theory_acf(model: &PyModel, max_lag: usize, seed: u64) -> PyResult<Option<Vec<f64>>> {
    let m = &model.0;
    if analytics::is_ex31_shape(m) {
        let c = analytics::ex31_constants_for(m).map_err(err)?;
        return Ok(Some(
            (0..=max_lag)
                .map(|k| analytics::ex31_acf(k, &c, m.mu1(), m.mu2()))
                .collect(),
        ));
    }
    if analytics::is_ex32_shape(m) {
        let a = analytics::ex32_acf1_for(m, analytics::CONVOLUTION_MC_SAMPLES, seed).map_err(err)?;
        return Ok(Some((0..=max_lag).map(|k| a.acf(k)).collect()));
    }
    if m.is_linear() {
        return Ok(Some(
            (0..=max_lag).map(|k| analytics::linear_ma_acf(m.phi(), k)).collect(),
        ));
    }
    Ok(None)
}

/// `(skewness, kurtosis)` of the drift-switching model at each threshold.
#[pyfunction]
#[pyo3(signature = (mu1, mu2, grid, innovation = None))]
fn moment_curve(
    mu1: f64,
    mu2: f64,
    grid: Vec<f64>,
    innovation: Option<PyInnovation>,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let inn = innovation.map_or(CoreInnovation::StandardNormal, |i| i.0);
    let curve = analytics::ex31_moment_curve(mu1, mu2, &inn, &grid).map_err(err)?;
    Ok(curve.into_iter().map(|(r, s)| (r, s.skewness, s.kurtosis)).collect())
}

#[pyfunction]
#[pyo3(signature = (values, max_lag = 20))]
fn sample_acf<'py>(py: Python<'py>, values: Vec<f64>, max_lag: usize) -> PyResult<Bound<'py, PyAny>> {
    let rep = estimate::sample_acf_values(&values, max_lag).map_err(err)?;
    to_py(py, &rep)
}

#[pyfunction]
fn sample_moments<'py>(py: Python<'py>, values: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let rep = estimate::sample_moments_values(&values).map_err(err)?;
    to_py(py, &rep)
}

#[pyfunction]
#[pyo3(signature = (lags, values, lag_range, ses = None))]
fn fit_decay<'py>(
    py: Python<'py>,
    lags: Vec<usize>,
    values: Vec<f64>,
    lag_range: (usize, usize),
    ses: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    if lags.len() != values.len() || ses.as_ref().is_some_and(|s| s.len() != lags.len()) {
        return Err(PyValueError::new_err("lags, values and ses must have equal length"));
    }
    let fit = estimate::fit_decay(&lags, &values, ses.as_deref(), lag_range).map_err(err)?;
    to_py(py, &fit)
}

#[pyfunction]
#[pyo3(signature = (model, u, v, lags, replicates = 100_000, seed = 1))]
fn dependence_decay<'py>(
    py: Python<'py>,
    model: &PyModel,
    u: f64,
    v: f64,
    lags: Vec<usize>,
    replicates: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let m = &model.0;
    let delta = m
        .contraction_delta(::tma::model::DEFAULT_DELTA_SAMPLES, seed)
        .map_err(err)?;
    let trunc = Truncation::default_for(m, &delta).map_err(err)?;
    let mut rep = py
        .detach(|| estimate::dependence_decay(m, u, v, &lags, replicates, seed, &trunc))
        .map_err(err)?;
    if let (Some(first), Some(last)) = (rep.lags.first().copied(), rep.lags.last().copied()) {
        let _ = rep.fit_decay((first, last));
    }
    to_py(py, &rep)
}

/// Full verification report as a dict; `passed` is true when no check failed.
#[pyfunction]
#[pyo3(signature = (model, seed = 1, horizon = 10_000, moment_n = 1_000_000, replicates = 100_000))]
fn verify<'py>(
    py: Python<'py>,
    model: &PyModel,
    seed: u64,
    horizon: usize,
    moment_n: usize,
    replicates: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = VerifyConfig {
        seed,
        horizon,
        moment_n,
        replicates,
        ..VerifyConfig::default()
    };
    let m = &model.0;
    let rep = py.detach(|| check::verify(m, &cfg)).map_err(err)?;
    let out = to_py(py, &rep)?;
    out.set_item("passed", rep.passed())?;
    Ok(out)
}

#[pymodule]
fn tma(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInnovation>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(theory_acf, m)?)?;
    m.add_function(wrap_pyfunction!(moment_curve, m)?)?;
    m.add_function(wrap_pyfunction!(sample_acf, m)?)?;
    m.add_function(wrap_pyfunction!(sample_moments, m)?)?;
    m.add_function(wrap_pyfunction!(fit_decay, m)?)?;
    m.add_function(wrap_pyfunction!(dependence_decay, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
