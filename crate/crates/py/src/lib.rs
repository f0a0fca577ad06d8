//! Python bindings for the `lsbm` crate.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

use lsbm::harness::{self, ExperimentConfig, TrialOptions};
use lsbm::model::threshold_report;
use lsbm::LsbmError;

fn to_py_err(e: LsbmError) -> PyErr {
    match e {
        LsbmError::Io(e) => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Converts any serializable report into plain Python objects via `json.loads`.
fn to_python<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Validated model parameters.
#[pyclass(name = "Params", frozen)]
#[derive(Clone)]
struct PyParams {
    inner: lsbm::LsbmParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (pi, q, t, n, fully_informative = false))]
    fn new(pi: Vec<f64>, q: Vec<Vec<Vec<f64>>>, t: f64, n: usize, fully_informative: bool) -> PyResult<Self> {
        let raw = lsbm::RawParams {
            k: pi.len(),
            labels: q.first().and_then(|row| row.first()).map_or(0, Vec::len),
            pi,
            q,
            t,
            n,
            fully_informative,
        };
        lsbm::validate_params(raw).map(|inner| Self { inner }).map_err(to_py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        lsbm::LsbmParams::from_json(text).map(|inner| Self { inner }).map_err(to_py_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn labels(&self) -> usize {
        self.inner.num_labels()
    }

    #[getter]
    fn t(&self) -> f64 {
        self.inner.t()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn pi(&self) -> Vec<f64> {
        self.inner.pi().to_vec()
    }

    fn with_t(&self, t: f64) -> PyResult<Self> {
        self.inner.with_t(t).map(|inner| Self { inner }).map_err(to_py_err)
    }

    fn with_n(&self, n: usize) -> PyResult<Self> {
        self.inner.with_n(n).map(|inner| Self { inner }).map_err(to_py_err)
    }

    fn critical_t(&self) -> PyResult<f64> {
        lsbm::critical_t(&self.inner).map_err(to_py_err)
    }

    /// `(D_+, lambda*)` between the profiles of communities `i` and `j`.
    fn divergence(&self, i: usize, j: usize) -> PyResult<(f64, f64)> {
        let x = lsbm::theta_matrix(&self.inner, i).map_err(to_py_err)?;
        let y = lsbm::theta_matrix(&self.inner, j).map_err(to_py_err)?;
        let d = lsbm::ch_divergence(&x, &y).map_err(to_py_err)?;
        Ok((d.value, d.lambda_star))
    }

    fn threshold_report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &threshold_report(&self.inner).map_err(to_py_err)?)
    }

    fn spectral_condition<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &lsbm::spectral_condition_check(&self.inner))
    }

    fn __repr__(&self) -> String {
        format!("Params(k={}, labels={}, t={}, n={})", self.inner.k(), self.inner.num_labels(), self.inner.t(), self.inner.n())
    }
}

/// A sampled graph: hidden communities plus labeled pairs.
#[pyclass(name = "Graph", frozen)]
struct PyGraph {
    inner: lsbm::LabeledGraph,
}

#[pymethods]
impl PyGraph {
    #[staticmethod]
    fn sample(params: &PyParams, seed: u64) -> PyResult<Self> {
        harness::sample_trial(&params.inner, seed).map(|inner| Self { inner }).map_err(to_py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn communities(&self) -> Vec<usize> {
        self.inner.assignment().sigma().to_vec()
    }

    /// `(u, v, label)` triples with `u < v` and labels starting at 1.
    fn edges(&self) -> Vec<(u32, u32, u8)> {
        self.inner.labels().pairs().to_vec()
    }

    fn to_text(&self) -> String {
        self.inner.labels().to_text()
    }

    fn __len__(&self) -> usize {
        self.inner.labels().num_pairs()
    }
}

/// Runs spectral recovery on a sampled graph (or its text form) and returns
/// `(labels, summary)`.
#[pyfunction]
fn recover<'py>(py: Python<'py>, params: &PyParams, graph: &Bound<'py, PyAny>) -> PyResult<(Vec<usize>, Bound<'py, PyAny>)> {
    let recovery = if let Ok(g) = graph.downcast::<PyGraph>() {
        lsbm::spectral_recover(g.get().inner.labels(), &params.inner)
    } else {
        let text: String = graph.extract()?;
        lsbm::PairLabels::from_text(&text).and_then(|labels| lsbm::spectral_recover(&labels, &params.inner))
    }
    .map_err(to_py_err)?;
    Ok((recovery.labels().to_vec(), to_python(py, &recovery.summary())?))
}

/// `(labeled_exact, partition_exact, agreement)` of an estimate against the truth.
#[pyfunction]
fn agreement(sigma_hat: Vec<usize>, sigma_star: Vec<usize>, k: usize) -> PyResult<(bool, bool, f64)> {
    let a = harness::agreement_metrics(&sigma_hat, &sigma_star, k).map_err(to_py_err)?;
    Ok((a.labeled_exact, a.partition_exact, a.agreement))
}

/// One seeded trial: sample, recover, score and diagnose.
#[pyfunction]
#[pyo3(signature = (params, seed, diagnostics = true))]
fn run_trial<'py>(py: Python<'py>, params: &PyParams, seed: u64, diagnostics: bool) -> PyResult<Bound<'py, PyAny>> {
    let opts = TrialOptions {
        diagnostics,
        ..TrialOptions::default()
    };
    let outcome = py
        .allow_threads(|| harness::run_trial_full(&params.inner, 0, seed, &opts))
        .map_err(to_py_err)?;
    to_python(py, &outcome.record)
}

/// Runs a sweep from a JSON config and returns the summary.
#[pyfunction]
fn run_sweep<'py>(py: Python<'py>, config_json: &str) -> PyResult<Bound<'py, PyAny>> {
    let config = ExperimentConfig::from_json(config_json).map_err(to_py_err)?;
    let outcome = py.allow_threads(|| harness::run_sweep(&config)).map_err(to_py_err)?;
    to_python(py, &outcome.summary)
}

#[pymodule]
fn lsbm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(recover, m)?)?;
    m.add_function(wrap_pyfunction!(agreement, m)?)?;
    m.add_function(wrap_pyfunction!(run_trial, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    Ok(())
}
