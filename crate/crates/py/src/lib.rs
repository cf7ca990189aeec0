//! Python bindings: `import elapsedtime`.

use absorbing_elapsed as core;
use core::elapsed::DEFAULT_SERIES_EPSILON;
use core::report::build_report;
use core::{ChainError, ElapsedQuery, RecurrenceMode, SimConfig, SimEstimate, VarianceMode};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(elapsedtime, InvalidChain, PyValueError, "Invalid matrix, state or argument.");
create_exception!(elapsedtime, ImpossibleObservation, InvalidChain, "H_ij = 0: the observation pair cannot occur.");
create_exception!(elapsedtime, SimulationError, pyo3::exceptions::PyRuntimeError, "Monte Carlo run aborted.");

fn to_py(e: ChainError) -> PyErr {
    match e {
        ChainError::ImpossiblePair { .. } => ImpossibleObservation::new_err(e.to_string()),
        ChainError::Simulation(_) => SimulationError::new_err(e.to_string()),
        _ => InvalidChain::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// A state given either as a 0-based index or as a label.
#[derive(FromPyObject)]
enum State {
    Index(usize),
    Label(String),
}

impl State {
    fn resolve(&self, m: &core::TransitionMatrix) -> PyResult<usize> {
        match self {
            State::Index(k) => m.check_index(*k).map(|_| *k).py(),
            State::Label(s) => m.resolve_state(s).py(),
        }
    }
}

fn variance_mode(name: &str) -> PyResult<VarianceMode> {
    match name {
        "paper" | "paper-closed" => Ok(VarianceMode::PaperClosed),
        "series" => Ok(VarianceMode::Series),
        "corrected" | "corrected-closed" => Ok(VarianceMode::CorrectedClosed),
        _ => Err(InvalidChain::new_err(format!(
            "unknown variance mode {name:?}; expected paper, series or corrected"
        ))),
    }
}

#[pyclass(name = "TransitionMatrix", module = "elapsedtime", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMatrix {
    inner: core::TransitionMatrix,
}

#[pymethods]
impl PyMatrix {
    #[new]
    #[pyo3(signature = (rows, labels=None))]
    fn new(rows: Vec<Vec<f64>>, labels: Option<Vec<String>>) -> PyResult<Self> {
        let inner = core::TransitionMatrix::with_labels(rows, labels).py()?;
        Ok(PyMatrix { inner })
    }

    /// Reads a CSV or JSON matrix file.
    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(PyMatrix {
            inner: core::load_matrix_file(path).py()?,
        })
    }

    /// Parses CSV or JSON text.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyMatrix {
            inner: core::load_matrix(text).py()?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels().to_vec()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.to_rows()
    }

    /// (transient, absorbing) state indices.
    fn classify(&self) -> PyResult<(Vec<usize>, Vec<usize>)> {
        let cs = core::classify(&self.inner).py()?;
        Ok((cs.transient().to_vec(), cs.absorbing().to_vec()))
    }

    /// Fundamental matrix N over the transient states, in `classify` order.
    fn fundamental(&self) -> PyResult<Vec<Vec<f64>>> {
        let cs = core::classify(&self.inner).py()?;
        let n = cs.fundamental();
        Ok((0..n.nrows()).map(|r| n.row(r).iter().copied().collect()).collect())
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("TransitionMatrix(n={})", self.inner.n())
    }
}

#[pyclass(name = "PassageSummary", module = "elapsedtime", frozen)]
struct PyPassage {
    matrix: core::TransitionMatrix,
    inner: core::PassageSummary,
}

#[pymethods]
impl PyPassage {
    #[getter]
    fn target(&self) -> usize {
        self.inner.target()
    }

    /// Return probability H_jj.
    #[getter]
    fn hjj(&self) -> f64 {
        self.inner.hjj()
    }

    /// H_ij, or None when `i` is not transient.
    fn hitting(&self, i: State) -> PyResult<Option<f64>> {
        Ok(self.inner.hitting(i.resolve(&self.matrix)?))
    }

    /// (tau_ij, v_ij) conditional on reaching j, or None.
    fn passage(&self, i: State) -> PyResult<Option<(f64, f64)>> {
        Ok(self.inner.passage(i.resolve(&self.matrix)?).map(|m| (m.tau, m.var)))
    }

    /// (tau_jj, v_jj) for `mode` in {"corrected", "paper"}, or None if no return is possible.
    #[pyo3(signature = (mode="corrected"))]
    fn recurrence(&self, mode: &str) -> PyResult<Option<(f64, f64)>> {
        let mode = match mode {
            "corrected" => RecurrenceMode::Corrected,
            "paper" | "paper-fidelity" => RecurrenceMode::PaperFidelity,
            _ => return Err(InvalidChain::new_err(format!("unknown recurrence mode {mode:?}"))),
        };
        Ok(self.inner.recurrence(mode).map(|m| (m.tau, m.var)))
    }

    fn __repr__(&self) -> String {
        format!("PassageSummary(target={}, hjj={})", self.inner.target(), self.inner.hjj())
    }
}

#[pyfunction]
fn passage_summary(matrix: &PyMatrix, j: State) -> PyResult<PyPassage> {
    let j = j.resolve(&matrix.inner)?;
    Ok(PyPassage {
        matrix: matrix.inner.clone(),
        inner: core::passage_summary(&matrix.inner, j).py()?,
    })
}

/// E(T) and V(T) for the observation pair; raises ImpossibleObservation if H_ij = 0.
#[pyfunction]
#[pyo3(signature = (matrix, i, j, variance_mode="corrected", epsilon=DEFAULT_SERIES_EPSILON))]
fn elapsed_moments<'py>(
    py: Python<'py>,
    matrix: &PyMatrix,
    i: State,
    j: State,
    variance_mode: &str,
    epsilon: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let (i, j) = (i.resolve(&matrix.inner)?, j.resolve(&matrix.inner)?);
    let ps = core::passage_summary(&matrix.inner, j).py()?;
    let mut q = ElapsedQuery::new(i, j).with_mode(self::variance_mode(variance_mode)?);
    q.series_epsilon = epsilon;
    let m = core::variance_elapsed(&ps, &q).py()?.require_defined(&ps, i).py()?;
    let d = PyDict::new(py);
    d.set_item("mode", m.mode.tag())?;
    d.set_item("expectation", m.expectation)?;
    d.set_item("variance", m.variance)?;
    d.set_item("series_as_printed", m.series_as_printed)?;
    d.set_item("truncation_n", m.truncation_n)?;
    Ok(d)
}

/// (probabilities for t = 1..tmax, residual tail mass).
#[pyfunction]
#[pyo3(signature = (matrix, i, j, tail=core::elapsed::DEFAULT_TAIL, tmax=None))]
fn distribution(
    matrix: &PyMatrix,
    i: State,
    j: State,
    tail: f64,
    tmax: Option<usize>,
) -> PyResult<(Vec<f64>, f64)> {
    let (i, j) = (i.resolve(&matrix.inner)?, j.resolve(&matrix.inner)?);
    let cs = core::classify(&matrix.inner).py()?;
    let ps = core::passage_summary(&matrix.inner, j).py()?;
    let mut q = ElapsedQuery::new(i, j);
    q.tail = tail;
    q.tmax = tmax;
    let d = core::distribution_of_elapsed(&cs, &ps, &q).py()?;
    Ok((d.probs, d.residual))
}

fn estimate_dict<'py>(py: Python<'py>, e: &SimEstimate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mean", e.mean)?;
    d.set_item("variance", e.variance)?;
    d.set_item("se_mean", e.se_mean)?;
    d.set_item("se_variance", e.se_variance)?;
    d.set_item("accepted", e.accepted)?;
    d.set_item("rejected", e.rejected)?;
    d.set_item("acceptance_rate", e.acceptance_rate)?;
    Ok(d)
}

/// Monte Carlo estimate of E(T) and V(T). Releases the GIL while running.
#[pyfunction]
#[pyo3(signature = (matrix, i, j, seed=42, trajectories=100_000))]
fn simulate<'py>(
    py: Python<'py>,
    matrix: &PyMatrix,
    i: State,
    j: State,
    seed: u64,
    trajectories: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let (i, j) = (i.resolve(&matrix.inner)?, j.resolve(&matrix.inner)?);
    let cfg = SimConfig::new(seed, trajectories);
    let m = &matrix.inner;
    let e = py.detach(|| core::simulate_elapsed(m, i, j, &cfg)).py()?;
    estimate_dict(py, &e)
}

/// Monte Carlo estimate of the return time to `j`.
#[pyfunction]
#[pyo3(signature = (matrix, j, seed=42, trajectories=100_000))]
fn simulate_recurrence<'py>(
    py: Python<'py>,
    matrix: &PyMatrix,
    j: State,
    seed: u64,
    trajectories: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let j = j.resolve(&matrix.inner)?;
    let cfg = SimConfig::new(seed, trajectories);
    let m = &matrix.inner;
    let e = py.detach(|| core::simulate_recurrence(m, j, &cfg)).py()?;
    estimate_dict(py, &e)
}

/// Exact enumeration of the law of T on small chains.
#[pyfunction]
#[pyo3(signature = (matrix, i, j, tail=1e-12))]
fn enumerate<'py>(py: Python<'py>, matrix: &PyMatrix, i: State, j: State, tail: f64) -> PyResult<Bound<'py, PyDict>> {
    let (i, j) = (i.resolve(&matrix.inner)?, j.resolve(&matrix.inner)?);
    let e = core::enumerate_elapsed(&matrix.inner, i, j, tail).py()?;
    let d = PyDict::new(py);
    d.set_item("distribution", e.distribution)?;
    d.set_item("mean", e.mean)?;
    d.set_item("variance", e.variance)?;
    d.set_item("residual", e.residual)?;
    d.set_item("mean_bound", e.mean_bound)?;
    d.set_item("variance_bound", e.variance_bound)?;
    Ok(d)
}

/// Full analytic report as a JSON string, matching `markov-elapsed analyze --json`.
#[pyfunction]
fn analyze(matrix: &PyMatrix, i: State, j: State) -> PyResult<String> {
    let (i, j) = (i.resolve(&matrix.inner)?, j.resolve(&matrix.inner)?);
    let cs = core::classify(&matrix.inner).py()?;
    let ps = core::passage_summary(&matrix.inner, j).py()?;
    let q = ElapsedQuery::new(i, j);
    let report = build_report("analyze", "python", &matrix.inner, &cs, &ps, &q, true).py()?;
    Ok(report.to_json())
}

#[pyfunction]
#[pyo3(signature = (N, s=0.0, h=0.5, u=0.0, v=0.0))]
#[allow(non_snake_case)]
fn wright_fisher_matrix(N: usize, s: f64, h: f64, u: f64, v: f64) -> PyResult<PyMatrix> {
    let params = core::WrightFisherParams { population: N, s, h, u, v };
    Ok(PyMatrix {
        inner: core::build_wf_matrix(&params).py()?,
    })
}

/// Age in generations of an allele now at `observed_count` copies that arose as one copy.
#[pyfunction]
#[pyo3(signature = (N, observed_count, s=0.0, h=0.5, u=0.0, v=0.0, variance_mode="corrected"))]
#[allow(non_snake_case, clippy::too_many_arguments)]
fn allele_age<'py>(
    py: Python<'py>,
    N: usize,
    observed_count: usize,
    s: f64,
    h: f64,
    u: f64,
    v: f64,
    variance_mode: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let params = core::WrightFisherParams { population: N, s, h, u, v };
    let options = core::wright_fisher::AgeOptions {
        variance_mode: self::variance_mode(variance_mode)?,
        ..Default::default()
    };
    let age = core::allele_age(&params, observed_count, &options).py()?;
    let d = PyDict::new(py);
    d.set_item("observed_count", age.observed_count)?;
    d.set_item("expected_age", age.expected_age)?;
    d.set_item("age_variance", age.age_variance)?;
    d.set_item("variance_mode", age.variance_mode.tag())?;
    Ok(d)
}

#[pymodule]
fn elapsedtime(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_class::<PyMatrix>()?;
    m.add_class::<PyPassage>()?;
    m.add("InvalidChain", py.get_type::<InvalidChain>())?;
    m.add("ImpossibleObservation", py.get_type::<ImpossibleObservation>())?;
    m.add("SimulationError", py.get_type::<SimulationError>())?;
    m.add_function(wrap_pyfunction!(passage_summary, m)?)?;
    m.add_function(wrap_pyfunction!(elapsed_moments, m)?)?;
    m.add_function(wrap_pyfunction!(distribution, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_recurrence, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(wright_fisher_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(allele_age, m)?)?;
    Ok(())
}
