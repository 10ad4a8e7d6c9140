//! Python module `racer`: scenario generation, OVRV calibration, model
//! training, closed-loop rollout and RDC auditing.
//!
//! Structured results (rollout summaries, audit summaries, training history)
//! are returned as plain dicts.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use racer_core::audit::audit_model;
use racer_core::datagen::{generate as generate_trajectory, ScenarioKind, ScenarioSpec};
use racer_core::domain::{build_samples, split_dataset, CfState, Provenance, SplitRatios};
use racer_core::io::{load_trajectory, save_trajectory};
use racer_core::neural::{load_checkpoint, save_checkpoint, RacerNet};
use racer_core::phys::{calibrate_ovrv, ovrv_accel, ovrv_rdc_derivatives};
use racer_core::sim::{rollout as run_rollout, RolloutOptions};
use racer_core::train::{train_model, History, ModelKind, TrainConfig};
use serde::Serialize;

fn err(e: racer_core::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(value: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = value.py().import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// OVRV parameters `(k1, k2, tau, eta)`.
#[pyclass(module = "racer", name = "OvrvParams", from_py_object)]
#[derive(Clone, Copy)]
struct PyOvrvParams {
    inner: racer_core::phys::OvrvParams,
}

#[pymethods]
impl PyOvrvParams {
    #[new]
    fn new(k1: f64, k2: f64, tau: f64, eta: f64) -> PyResult<Self> {
        let inner = racer_core::phys::OvrvParams::new(k1, k2, tau, eta);
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn min_gap() -> Self {
        Self { inner: racer_core::phys::OvrvParams::MIN_GAP }
    }

    #[staticmethod]
    fn max_gap() -> Self {
        Self { inner: racer_core::phys::OvrvParams::MAX_GAP }
    }

    #[getter]
    fn k1(&self) -> f64 {
        self.inner.k1
    }

    #[getter]
    fn k2(&self) -> f64 {
        self.inner.k2
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }

    /// Acceleration for a state `(spacing, relative_speed, speed)`.
    fn accel(&self, spacing: f64, relative_speed: f64, speed: f64) -> f64 {
        ovrv_accel(&CfState::new(spacing, relative_speed, speed), &self.inner)
    }

    /// `(da/dv, da/ds, da/dΔv)`.
    fn rdc_derivatives(&self) -> (f64, f64, f64) {
        let g = ovrv_rdc_derivatives(&self.inner);
        (g.dv, g.ds, g.dr)
    }

    fn equilibrium_spacing(&self, speed: f64) -> f64 {
        self.inner.equilibrium_spacing(speed)
    }

    fn __repr__(&self) -> String {
        let p = self.inner;
        format!("OvrvParams(k1={}, k2={}, tau={}, eta={})", p.k1, p.k2, p.tau, p.eta)
    }
}

/// Leader/follower series at a fixed time step.
#[pyclass(module = "racer", name = "Trajectory")]
struct PyTrajectory {
    inner: racer_core::domain::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[new]
    fn new(dt: f64, lead_speed: Vec<f64>, follow_speed: Vec<f64>, spacing: Vec<f64>) -> PyResult<Self> {
        let inner = racer_core::domain::Trajectory::new(dt, lead_speed, follow_speed, spacing, Provenance::Measured)
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: load_trajectory(&path, Provenance::Measured).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_trajectory(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt()
    }

    #[getter]
    fn lead_speed(&self) -> Vec<f64> {
        self.inner.lead_speed().to_vec()
    }

    #[getter]
    fn follow_speed(&self) -> Vec<f64> {
        self.inner.follow_speed().to_vec()
    }

    #[getter]
    fn spacing(&self) -> Vec<f64> {
        self.inner.spacing().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Trained network (`nn`, `pinn` or `racer`).
#[pyclass(module = "racer", name = "Model")]
struct PyModel {
    net: RacerNet,
    history: Option<History>,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { net: load_checkpoint(&path).map_err(err)?, history: None })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&self.net, &path).map_err(err)?;
        Ok(())
    }

    #[getter]
    fn seq_len(&self) -> usize {
        self.net.seq_len()
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.net.parameter_count()
    }

    /// Acceleration for a window of `(spacing, relative_speed, speed)`
    /// states, oldest first, of length `seq_len`.
    fn predict(&self, window: Vec<(f64, f64, f64)>) -> PyResult<f64> {
        let states: Vec<CfState> = window.into_iter().map(|(s, r, v)| CfState::new(s, r, v)).collect();
        self.net.predict(&states).map_err(err)
    }

    /// Per-epoch records of the run that produced this model, if any.
    fn history<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyAny>>> {
        self.history.as_ref().map(|h| to_py(py, h)).transpose()
    }
}

enum Model {
    Net(Box<RacerNet>),
    Ovrv(racer_core::phys::OvrvParams),
}

fn extract_model(model: &Bound<'_, PyAny>) -> PyResult<Model> {
    if let Ok(m) = model.cast::<PyModel>() {
        return Ok(Model::Net(Box::new(m.borrow().net.clone())));
    }
    if let Ok(p) = model.extract::<PyOvrvParams>() {
        return Ok(Model::Ovrv(p.inner));
    }
    Err(PyValueError::new_err("model: expected a Model or OvrvParams"))
}

/// Synthetic trajectory from one of the scenario kinds (`oscillatory`,
/// `low_speed_steps`, `high_speed_steps`, `dips`).
#[pyfunction]
#[pyo3(signature = (kind="oscillatory", duration=None, noise_std=None, seed=0, params=None))]
fn generate(
    kind: &str,
    duration: Option<f64>,
    noise_std: Option<f64>,
    seed: u64,
    params: Option<PyOvrvParams>,
) -> PyResult<PyTrajectory> {
    let kind: ScenarioKind = kind.parse().map_err(err)?;
    let mut spec = ScenarioSpec::new(kind);
    if let Some(d) = duration {
        spec.duration = d;
    }
    if let Some(n) = noise_std {
        spec.noise_std = n;
    }
    if let Some(p) = params {
        spec.params = p.inner;
    }
    spec.seed = seed;
    Ok(PyTrajectory { inner: generate_trajectory(&spec).map_err(err)? })
}

/// Fits OVRV parameters to the training split; returns `(params, rmse)`.
#[pyfunction]
#[pyo3(signature = (trajectory, budget=20_000, seed=0))]
fn calibrate(trajectory: &PyTrajectory, budget: usize, seed: u64) -> PyResult<(PyOvrvParams, f64)> {
    let traj = &trajectory.inner;
    let samples = build_samples(traj, 1, traj.dt()).map_err(err)?;
    let split = split_dataset(&samples, SplitRatios::default(), seed).map_err(err)?;
    let cal = calibrate_ovrv(&split, racer_core::phys::OvrvParams::DEFAULT_INIT, budget).map_err(err)?;
    Ok((PyOvrvParams { inner: cal.params }, cal.objective))
}

/// Trains a model. `config` is an optional dict with the same fields as the
/// `train` section of a CLI config file; `kind` and `seed` override it.
#[pyfunction]
#[pyo3(signature = (trajectory, kind="racer", config=None, calibration=None, seed=None))]
fn train(
    py: Python<'_>,
    trajectory: &PyTrajectory,
    kind: &str,
    config: Option<&Bound<'_, PyDict>>,
    calibration: Option<PyOvrvParams>,
    seed: Option<u64>,
) -> PyResult<PyModel> {
    let mut cfg: TrainConfig = match config {
        Some(c) => from_py(c.as_any())?,
        None => TrainConfig::default(),
    };
    cfg.kind = kind.parse::<ModelKind>().map_err(err)?;
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.net.seed = s;
    }
    cfg.validate().map_err(err)?;
    let traj = trajectory.inner.clone();
    let ovrv = calibration.map(|p| p.inner);
    let outcome = py
        .detach(move || {
            let samples = build_samples(&traj, cfg.net.seq_len, traj.dt())?;
            let split = split_dataset(&samples, SplitRatios::default(), cfg.seed)?;
            train_model(&split, &cfg, ovrv)
        })
        .map_err(err)?;
    Ok(PyModel { net: outcome.net, history: Some(outcome.history) })
}

/// Closed-loop rollout of a `Model` or `OvrvParams` against the lead
/// speeds of `trajectory`. Returns a dict with the simulated series, the
/// crash (if any) and the RMSE (absent after a crash).
#[pyfunction]
fn rollout<'py>(py: Python<'py>, model: &Bound<'py, PyAny>, trajectory: &PyTrajectory) -> PyResult<Bound<'py, PyAny>> {
    let result = match extract_model(model)? {
        Model::Net(mut net) => run_rollout(net.as_mut(), &trajectory.inner, RolloutOptions::default()),
        Model::Ovrv(mut p) => run_rollout(&mut p, &trajectory.inner, RolloutOptions::default()),
    }
    .map_err(err)?;
    to_py(py, &result)
}

/// RDC violation counts and rates of a `Model` or `OvrvParams` over the
/// samples of `trajectory`.
#[pyfunction]
#[pyo3(signature = (model, trajectory, tolerance=0.0))]
fn audit<'py>(
    py: Python<'py>,
    model: &Bound<'py, PyAny>,
    trajectory: &PyTrajectory,
    tolerance: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let traj = &trajectory.inner;
    let report = match extract_model(model)? {
        Model::Net(net) => audit_model(net.as_ref(), &build_samples(traj, net.seq_len(), traj.dt()).map_err(err)?, tolerance),
        Model::Ovrv(p) => audit_model(&p, &build_samples(traj, 1, traj.dt()).map_err(err)?, tolerance),
    }
    .map_err(err)?;
    to_py(py, &report.summary())
}

#[pymodule]
fn racer(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", racer_core::VERSION)?;
    m.add_class::<PyOvrvParams>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(rollout, m)?)?;
    m.add_function(wrap_pyfunction!(audit, m)?)?;
    Ok(())
}
