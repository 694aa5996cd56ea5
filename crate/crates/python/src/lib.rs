//! Python bindings for `wfrdoc`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use wfrdoc::corpus::{self, to_nbow, PreprocessOptions, ProcessedDocument};
use wfrdoc::eval::{self, ScoredPair};
use wfrdoc::measures::{self, CostMatrix};
use wfrdoc::retrieval::{self, DocumentIndex};
use wfrdoc::solver::{self, SolverSchedule};

fn to_py(e: wfrdoc::Error) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// Hits as (id, distance), survivor fraction per stage, full solves.
type TopkOutput = (Vec<(String, f64)>, Vec<f64>, usize);

#[pyclass(name = "DiscreteMeasure", from_py_object)]
#[derive(Clone)]
struct PyMeasure(measures::DiscreteMeasure);

#[pymethods]
impl PyMeasure {
    #[new]
    fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> PyResult<Self> {
        measures::DiscreteMeasure::from_points(points, weights).map(PyMeasure).map_err(to_py)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights().to_vec()
    }

    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.0.points().rows().into_iter().map(|r| r.to_vec()).collect()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn total_mass(&self) -> f64 {
        self.0.total_mass()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("DiscreteMeasure(n={}, dim={}, mass={})", self.0.len(), self.0.dim(), self.0.total_mass())
    }
}

#[pyclass(name = "SolverSchedule", from_py_object)]
#[derive(Clone)]
struct PySchedule(SolverSchedule);

#[pymethods]
impl PySchedule {
    /// Parses "eps:iters,eps:iters,..."; with no argument, the default
    /// five-stage schedule.
    #[new]
    #[pyo3(signature = (spec = None))]
    fn new(spec: Option<&str>) -> PyResult<Self> {
        match spec {
            Some(s) => s.parse().map(PySchedule).map_err(to_py),
            None => Ok(PySchedule(SolverSchedule::default())),
        }
    }

    #[staticmethod]
    fn high_precision(count: usize, iters_per_inv_eps: f64) -> Self {
        PySchedule(SolverSchedule::high_precision(count, iters_per_inv_eps))
    }

    fn stages(&self) -> Vec<(f64, usize)> {
        self.0.stages().iter().map(|s| (s.epsilon, s.iterations)).collect()
    }

    fn __repr__(&self) -> String {
        format!("SolverSchedule(\"{}\")", self.0)
    }
}

#[pyclass(name = "SolveResult", get_all)]
struct PySolveResult {
    plan: Vec<Vec<f64>>,
    phi: Vec<f64>,
    psi: Vec<f64>,
    primal: f64,
    dual: f64,
    gap: f64,
    distance: f64,
    /// `(stage, epsilon, iterations, primal, dual)` per stage.
    stage_trace: Vec<(usize, f64, usize, f64, f64)>,
}

#[pymethods]
impl PySolveResult {
    fn relative_gap(&self) -> f64 {
        self.gap / self.primal.abs().max(1e-12)
    }

    fn __repr__(&self) -> String {
        format!(
            "SolveResult(distance={}, primal={}, dual={}, gap={})",
            self.distance, self.primal, self.dual, self.gap
        )
    }
}

fn schedule_or_default(s: Option<PySchedule>) -> SolverSchedule {
    s.map(|s| s.0).unwrap_or_default()
}

#[pyfunction]
#[pyo3(signature = (mu, nu, eta = 1.0, schedule = None))]
fn solve_wfr(py: Python<'_>, mu: PyMeasure, nu: PyMeasure, eta: f64, schedule: Option<PySchedule>) -> PyResult<PySolveResult> {
    let schedule = schedule_or_default(schedule);
    let r = py
        .detach(|| solver::solve_wfr(&mu.0, &nu.0, eta, &schedule))
        .map_err(to_py)?;
    Ok(PySolveResult {
        plan: r.plan.entries().rows().into_iter().map(|row| row.to_vec()).collect(),
        phi: r.potentials.phi,
        psi: r.potentials.psi,
        primal: r.primal,
        dual: r.dual,
        gap: r.gap,
        distance: r.distance,
        stage_trace: r
            .stage_trace
            .iter()
            .map(|s| (s.stage, s.epsilon, s.iterations, s.primal, s.dual))
            .collect(),
    })
}

#[pyfunction]
fn wfr_cost(mu: PyMeasure, nu: PyMeasure, eta: f64) -> PyResult<Vec<Vec<f64>>> {
    let c = measures::wfr_cost(&mu.0, &nu.0, eta).map_err(to_py)?;
    Ok(c.values().rows().into_iter().map(|r| r.to_vec()).collect())
}

#[pyfunction]
fn generalized_kl(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    measures::generalized_kl(&a, &b).map_err(to_py)
}

#[pyfunction]
fn dirac_wfr(h0: f64, x0: Vec<f64>, h1: f64, x1: Vec<f64>, eta: f64) -> PyResult<f64> {
    if x0.len() != x1.len() {
        return Err(PyValueError::new_err("Dirac locations must share a dimension"));
    }
    Ok(wfrdoc::baselines::dirac_wfr(h0, &x0, h1, &x1, eta))
}

/// Closed-form plan row and objective for a single source point.
#[pyfunction]
fn single_source_plan(mu_mass: f64, cost_row: Vec<f64>, nu: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
    wfrdoc::baselines::single_source_plan(mu_mass, &cost_row, &nu).map_err(to_py)
}

/// Balanced entropic transport cost; `cost` is "euclidean" or "wfr".
#[pyfunction]
#[pyo3(signature = (mu, nu, cost = "euclidean", eta = 1.0, schedule = None))]
fn balanced_cost(py: Python<'_>, mu: PyMeasure, nu: PyMeasure, cost: &str, eta: f64, schedule: Option<PySchedule>) -> PyResult<f64> {
    let c: CostMatrix = match cost {
        "euclidean" => measures::euclidean_cost(&mu.0, &nu.0),
        "wfr" => measures::wfr_cost(&mu.0, &nu.0, eta),
        other => return Err(PyValueError::new_err(format!("unknown cost `{other}`"))),
    }
    .map_err(to_py)?;
    let schedule = schedule_or_default(schedule);
    py.detach(|| wfrdoc::baselines::balanced_sinkhorn(&mu.0, &nu.0, &c, &schedule))
        .map(|r| r.primal)
        .map_err(to_py)
}

#[pyclass(name = "EmbeddingTable")]
struct PyTable(corpus::EmbeddingTable);

#[pymethods]
impl PyTable {
    #[new]
    fn new(dimension: usize) -> Self {
        PyTable(corpus::EmbeddingTable::new(dimension))
    }

    #[staticmethod]
    #[pyo3(signature = (path, dimension = None))]
    fn load(path: &str, dimension: Option<usize>) -> PyResult<Self> {
        corpus::load_embeddings(path, dimension).map(PyTable).map_err(to_py)
    }

    /// Returns False when the token was already present.
    fn insert(&mut self, token: &str, vector: Vec<f64>) -> PyResult<bool> {
        self.0.insert(token, &vector).map_err(to_py)
    }

    fn get(&self, token: &str) -> Option<Vec<f64>> {
        self.0.get(token).map(|v| v.to_vec())
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.0.dimension()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __contains__(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    /// nBOW measure of `text` and its in-vocabulary tokens.
    #[pyo3(signature = (text, lowercase = true, stopwords = None))]
    fn nbow(&self, text: &str, lowercase: bool, stopwords: Option<Vec<String>>) -> PyResult<(PyMeasure, Vec<String>)> {
        let opts = PreprocessOptions::new(lowercase).with_stopwords(stopwords.unwrap_or_default());
        let doc = ProcessedDocument::from_text("text", None, text, &opts);
        let n = to_nbow(&doc, &self.0).map_err(to_py)?;
        Ok((PyMeasure(n.measure), n.tokens))
    }
}

#[pyfunction]
#[pyo3(signature = (text, lowercase = true, stopwords = None))]
fn preprocess(text: &str, lowercase: bool, stopwords: Option<Vec<String>>) -> Vec<(String, u32)> {
    let opts = PreprocessOptions::new(lowercase).with_stopwords(stopwords.unwrap_or_default());
    corpus::preprocess(text, &opts).into_iter().collect()
}

#[pyclass(name = "DocumentIndex")]
struct PyIndex(DocumentIndex);

#[pymethods]
impl PyIndex {
    #[new]
    fn new(dimension: usize) -> Self {
        PyIndex(DocumentIndex::new(dimension))
    }

    #[pyo3(signature = (id, measure, label = None))]
    fn add(&mut self, id: String, measure: PyMeasure, label: Option<String>) -> PyResult<()> {
        self.0.push(id, label, measure.0).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        DocumentIndex::load(path).map(PyIndex).map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// `(hits, survivors_after_stage, full_solves)` with hits as `(id, distance)`.
    #[pyo3(signature = (query, k, eta = 1.0, schedule = None, exhaustive = false))]
    fn topk(
        &self,
        py: Python<'_>,
        query: PyMeasure,
        k: usize,
        eta: f64,
        schedule: Option<PySchedule>,
        exhaustive: bool,
    ) -> PyResult<TopkOutput> {
        let schedule = schedule_or_default(schedule);
        let r = py
            .detach(|| retrieval::topk_query(&query.0, &self.0, k, eta, &schedule, exhaustive))
            .map_err(to_py)?;
        Ok((
            r.hits.into_iter().map(|h| (h.id, h.distance)).collect(),
            r.prune_stats.survivors_after_stage,
            r.prune_stats.full_solves,
        ))
    }

    #[pyo3(signature = (query, k, eta = 1.0, schedule = None))]
    fn classify(&self, py: Python<'_>, query: PyMeasure, k: usize, eta: f64, schedule: Option<PySchedule>) -> PyResult<String> {
        let schedule = schedule_or_default(schedule);
        py.detach(|| retrieval::knn_classify(&query.0, &self.0, k, eta, &schedule))
            .map(|(label, _)| label)
            .map_err(to_py)
    }
}

/// `(threshold, precision, recall)` points for `(score, label)` pairs.
#[pyfunction]
fn pr_curve(scored: Vec<(f64, bool)>) -> PyResult<Vec<(f64, f64, f64)>> {
    let pairs: Vec<ScoredPair> = scored
        .into_iter()
        .enumerate()
        .map(|(k, (score, label))| ScoredPair {
            pair_id: k.to_string(),
            score,
            label,
        })
        .collect();
    let curve = eval::pr_curve(&pairs).map_err(to_py)?;
    Ok(curve.into_iter().map(|p| (p.threshold, p.precision, p.recall)).collect())
}

#[pymodule]
fn wfrdoc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMeasure>()?;
    m.add_class::<PySchedule>()?;
    m.add_class::<PySolveResult>()?;
    m.add_class::<PyTable>()?;
    m.add_class::<PyIndex>()?;
    m.add_function(wrap_pyfunction!(solve_wfr, m)?)?;
    m.add_function(wrap_pyfunction!(wfr_cost, m)?)?;
    m.add_function(wrap_pyfunction!(generalized_kl, m)?)?;
    m.add_function(wrap_pyfunction!(dirac_wfr, m)?)?;
    m.add_function(wrap_pyfunction!(single_source_plan, m)?)?;
    m.add_function(wrap_pyfunction!(balanced_cost, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(pr_curve, m)?)?;
    Ok(())
}
