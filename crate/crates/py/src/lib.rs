//! Python bindings for the planner.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use isac_planner::catalog::{Catalog as CoreCatalog, CatalogEntry};
use isac_planner::comm::{self, RateMode};
use isac_planner::geometry::{self, Region, SampleMode, SampleSet, Vec3};
use isac_planner::mm::{self, MmConfig};
use isac_planner::scenario::ScenarioConfig;
use isac_planner::search::{coordinate_global_search, SearchObjective};
use isac_planner::sensing;
use isac_planner::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e @ (Error::InfeasibleRate { .. } | Error::Initialization(_) | Error::SingularRemainder { .. }) => {
            PyRuntimeError::new_err(e.to_string())
        }
        e => PyValueError::new_err(e.to_string()),
    }
}

fn vec3(p: [f64; 3]) -> Vec3 {
    Vec3::from(p)
}

fn arrays(points: &[Vec3]) -> Vec<[f64; 3]> {
    points.iter().map(|p| [p.x, p.y, p.z]).collect()
}

#[pyclass(name = "SensingParams", module = "isac_planner_py", from_py_object)]
#[derive(Clone)]
pub struct PySensingParams {
    inner: sensing::SensingParams,
}

#[pymethods]
impl PySensingParams {
    #[new]
    #[pyo3(signature = (beta = 2.0, kappa_s = None))]
    fn new(beta: f64, kappa_s: Option<f64>) -> PyResult<Self> {
        let inner = match kappa_s {
            Some(k) => sensing::SensingParams::new(beta, k),
            None => sensing::SensingParams::from_physical(beta, &Default::default()),
        }
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[getter]
    fn kappa_s(&self) -> f64 {
        self.inner.kappa_s
    }

    fn __repr__(&self) -> String {
        format!("SensingParams(beta={}, kappa_s={:e})", self.inner.beta, self.inner.kappa_s)
    }
}

#[pyclass(name = "CommParams", module = "isac_planner_py", from_py_object)]
#[derive(Clone)]
pub struct PyCommParams {
    inner: comm::CommParams,
}

#[pymethods]
impl PyCommParams {
    #[new]
    #[pyo3(signature = (alpha = 4.0, m_t = 5, p_c = 0.01, sigma_c2 = 1e-12, r_th = 0.0))]
    fn new(alpha: f64, m_t: u32, p_c: f64, sigma_c2: f64, r_th: f64) -> PyResult<Self> {
        let inner = comm::CommParams { alpha, m_t, p_c, sigma_c2, r_th };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn m_t(&self) -> u32 {
        self.inner.m_t
    }

    #[getter]
    fn r_th(&self) -> f64 {
        self.inner.r_th
    }
}

#[pyclass(name = "Deployment", module = "isac_planner_py", from_py_object)]
#[derive(Clone)]
pub struct PyDeployment {
    inner: geometry::Deployment,
}

#[pymethods]
impl PyDeployment {
    #[new]
    fn new(positions: Vec<[f64; 3]>) -> PyResult<Self> {
        let inner = geometry::Deployment::new(positions.into_iter().map(vec3).collect()).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn positions(&self) -> Vec<[f64; 3]> {
        arrays(self.inner.positions())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Deployment({:?})", self.positions())
    }
}

/// Weighted sample points; weights default to uniform.
fn sample_set(points: Vec<[f64; 3]>, weights: Option<Vec<f64>>) -> PyResult<SampleSet> {
    let pts: Vec<Vec3> = points.into_iter().map(vec3).collect();
    match weights {
        Some(w) => SampleSet::weighted(pts, w),
        None => SampleSet::uniform(pts),
    }
    .map_err(to_py)
}

#[pyfunction]
fn fisher_matrix(target: [f64; 3], deployment: &PyDeployment, params: &PySensingParams) -> PyResult<[[f64; 3]; 3]> {
    let f = sensing::fisher_matrix(&vec3(target), &deployment.inner, &params.inner).map_err(to_py)?;
    Ok(std::array::from_fn(|r| std::array::from_fn(|c| f[(r, c)])))
}

#[pyfunction]
fn crlb_point(target: [f64; 3], deployment: &PyDeployment, params: &PySensingParams) -> PyResult<f64> {
    sensing::crlb_point(&vec3(target), &deployment.inner, &params.inner).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (targets, deployment, params, weights = None))]
fn area_crlb(
    targets: Vec<[f64; 3]>,
    deployment: &PyDeployment,
    params: &PySensingParams,
    weights: Option<Vec<f64>>,
) -> PyResult<f64> {
    sensing::area_crlb(&sample_set(targets, weights)?, &deployment.inner, &params.inner).map_err(to_py)
}

#[pyfunction]
fn rate_point(user: [f64; 3], deployment: &PyDeployment, params: &PyCommParams) -> PyResult<f64> {
    comm::rate_point(&vec3(user), &deployment.inner, &params.inner).map_err(to_py)
}

/// Surrogate area rate, or a Monte Carlo estimate when `mc_draws` is given.
#[pyfunction]
#[pyo3(signature = (users, deployment, params, weights = None, mc_draws = None, seed = 0))]
fn area_rate(
    users: Vec<[f64; 3]>,
    deployment: &PyDeployment,
    params: &PyCommParams,
    weights: Option<Vec<f64>>,
    mc_draws: Option<usize>,
    seed: u64,
) -> PyResult<f64> {
    let mode = match mc_draws {
        Some(n_draws) => RateMode::MonteCarlo { n_draws, seed },
        None => RateMode::Surrogate,
    };
    comm::area_rate(&sample_set(users, weights)?, &deployment.inner, &params.inner, mode).map_err(to_py)
}

/// Uniform grid over a region given as JSON; returns `(points, weights)`.
#[pyfunction]
fn sample_region(region_json: &str, counts: Vec<usize>) -> PyResult<(Vec<[f64; 3]>, Vec<f64>)> {
    let region: Region = serde_json::from_str(region_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let s = geometry::sample_region(&region, &counts, SampleMode::UniformGrid).map_err(to_py)?;
    Ok((arrays(s.points()), s.weights().to_vec()))
}

#[pyclass(name = "Scenario", module = "isac_planner_py")]
pub struct PyScenario {
    cfg: ScenarioConfig,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { cfg: ScenarioConfig::from_json(text).map_err(to_py)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { cfg: ScenarioConfig::load(&path).map_err(to_py)? })
    }

    #[getter]
    fn n_bs(&self) -> usize {
        self.cfg.n_bs
    }

    fn sensing_params(&self) -> PyResult<PySensingParams> {
        Ok(PySensingParams { inner: self.cfg.sensing.resolve().map_err(to_py)? })
    }

    fn comm_params(&self) -> PyCommParams {
        PyCommParams { inner: self.cfg.comm }
    }

    fn targets(&self) -> PyResult<Vec<[f64; 3]>> {
        Ok(arrays(self.cfg.targets().map_err(to_py)?.points()))
    }

    fn users(&self) -> PyResult<Vec<[f64; 3]>> {
        Ok(arrays(self.cfg.users().map_err(to_py)?.points()))
    }

    /// `(a_crlb, area_rate)` of a deployment.
    fn evaluate(&self, deployment: &PyDeployment) -> PyResult<(f64, f64)> {
        let p = self.cfg.problem().map_err(to_py)?;
        let pos = deployment.inner.positions();
        Ok((p.objective(pos), p.area_rate(pos)))
    }

    #[pyo3(signature = (seed = None))]
    fn initial_deployment(&self, seed: Option<u64>) -> PyResult<PyDeployment> {
        let p = self.cfg.problem().map_err(to_py)?;
        let inner = mm::initialize_deployment(&p, self.cfg.n_bs, seed.unwrap_or(self.cfg.seed)).map_err(to_py)?;
        Ok(PyDeployment { inner })
    }

    /// MM optimization; returns `(deployment, objective_trace, converged)`.
    #[pyo3(signature = (init = None, max_sweeps = None))]
    fn optimize(
        &self,
        py: Python<'_>,
        init: Option<PyDeployment>,
        max_sweeps: Option<usize>,
    ) -> PyResult<(PyDeployment, Vec<f64>, bool)> {
        let p = self.cfg.problem().map_err(to_py)?;
        let start = match init {
            Some(d) => d.inner,
            None => mm::initialize_deployment(&p, self.cfg.n_bs, self.cfg.seed).map_err(to_py)?,
        };
        let cfg = MmConfig { max_outer_sweeps: max_sweeps.unwrap_or(self.cfg.optimizer.max_outer_sweeps), ..self.cfg.optimizer };
        let out = py.detach(|| mm::mm_optimize(&p, &start, &cfg)).map_err(to_py)?;
        Ok((PyDeployment { inner: out.deployment }, out.trace, out.status == mm::MmStatus::Converged))
    }

    /// Reference coordinate-wise grid search on the sensing objective.
    #[pyo3(signature = (init = None))]
    fn grid_search(&self, py: Python<'_>, init: Option<PyDeployment>) -> PyResult<PyDeployment> {
        let p = self.cfg.problem().map_err(to_py)?;
        let start = match init {
            Some(d) => d.inner,
            None => mm::initialize_deployment(&p, self.cfg.n_bs, self.cfg.seed).map_err(to_py)?,
        };
        let grid = self.cfg.grid();
        let out = py.detach(|| coordinate_global_search(&p, &start, &grid, SearchObjective::ACrlb)).map_err(to_py)?;
        Ok(PyDeployment { inner: out.deployment })
    }
}

#[pyclass(name = "Catalog", module = "isac_planner_py")]
pub struct PyCatalog {
    inner: CoreCatalog,
}

#[pymethods]
impl PyCatalog {
    #[new]
    fn new() -> Self {
        Self { inner: CoreCatalog::new() }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: CoreCatalog::load(&path).map_err(to_py)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.entries.len()
    }

    /// Store the deployment for the scenario's sensing region; returns the
    /// entry id.
    #[pyo3(signature = (scenario, deployment, optimizer = "external"))]
    fn add(&mut self, scenario: &PyScenario, deployment: &PyDeployment, optimizer: &str) -> PyResult<usize> {
        let p = scenario.cfg.problem().map_err(to_py)?;
        let obj = sensing::area_crlb(&p.targets, &deployment.inner, &p.sensing).map_err(to_py)?;
        let entry = CatalogEntry::new(scenario.cfg.sensing_region.clone(), deployment.inner.clone(), optimizer, obj, &p.sensing)
            .map_err(to_py)?;
        Ok(self.inner.add(entry).0)
    }

    /// `(deployment, predicted_a_crlb)` mapped onto the scenario's region,
    /// or `None`.
    fn query(&self, scenario: &PyScenario) -> PyResult<Option<(PyDeployment, f64)>> {
        let params = scenario.cfg.sensing.resolve().map_err(to_py)?;
        let hit = self.inner.query(&scenario.cfg.sensing_region, scenario.cfg.n_bs, &params).map_err(to_py)?;
        Ok(hit.map(|h| (PyDeployment { inner: h.deployment }, h.predicted_objective)))
    }
}

#[pymodule]
fn isac_planner_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySensingParams>()?;
    m.add_class::<PyCommParams>()?;
    m.add_class::<PyDeployment>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyCatalog>()?;
    m.add_function(wrap_pyfunction!(fisher_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(crlb_point, m)?)?;
    m.add_function(wrap_pyfunction!(area_crlb, m)?)?;
    m.add_function(wrap_pyfunction!(rate_point, m)?)?;
    m.add_function(wrap_pyfunction!(area_rate, m)?)?;
    m.add_function(wrap_pyfunction!(sample_region, m)?)?;
    Ok(())
}
