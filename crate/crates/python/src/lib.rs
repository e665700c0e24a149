//! Python bindings: model builders, tasks, the deterministic limit, streaming
//! SGD and a few scalar helpers. Curves come back as `dict[str, list[float]]`.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gmmdyn::asymptotics;
use gmmdyn::config::parse_config;
use gmmdyn::experiment::run_experiment;
use gmmdyn::moments::{logistic_moments as moments, DEFAULT_HERMITE_NODES};
use gmmdyn::ode::{integrate_task, OdeOptions};
use gmmdyn::sgd::{run_sgd as sgd, SgdOptions};
use gmmdyn::spectral::{self, validate, ModelLimits};
use gmmdyn::task::random_target;
use gmmdyn::{LearningCurve, Schedule, SolverSettings, TimeGrid};

fn err(e: gmmdyn::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Gaussian mixture stored in the shared eigenbasis.
#[pyclass(name = "SpectralMixture", module = "pygmmdyn", frozen)]
struct PySpectralMixture {
    model: spectral::SpectralMixture,
    partition: Option<spectral::ZeroOnePartition>,
}

impl From<spectral::SpectralMixture> for PySpectralMixture {
    fn from(model: spectral::SpectralMixture) -> Self {
        Self { model, partition: None }
    }
}

#[pymethods]
impl PySpectralMixture {
    /// Two classes with means `+-mu`, `|mu| = norm`, identity covariance.
    #[staticmethod]
    #[pyo3(signature = (d, norm = 1.0))]
    fn identity(d: usize, norm: f64) -> PyResult<Self> {
        spectral::build_identity(d, norm).map(Self::from).map_err(err)
    }

    /// Power-law spectrum `lambda_i ~ i^-alpha` with mean weights `~ i^-beta`.
    #[staticmethod]
    #[pyo3(signature = (d, alpha, beta, norm = 1.0))]
    fn power_law(d: usize, alpha: Vec<f64>, beta: f64, norm: f64) -> PyResult<Self> {
        spectral::build_power_law(d, &alpha, beta, norm).map(Self::from).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (d, alpha, classes, seed = 0))]
    fn power_law_multiclass(d: usize, alpha: f64, classes: usize, seed: u64) -> PyResult<Self> {
        spectral::build_power_law_multiclass(d, alpha, classes, seed)
            .map(Self::from)
            .map_err(err)
    }

    /// Zero-one spectrum; `fractions` and `mass` are indexed by block
    /// `00, 01, 10, 11`.
    #[staticmethod]
    #[pyo3(signature = (d, fractions, mass, seed = 0))]
    fn zero_one(d: usize, fractions: [f64; 4], mass: [f64; 4], seed: u64) -> PyResult<Self> {
        let (model, partition) = spectral::build_zero_one(d, fractions, mass, seed).map_err(err)?;
        Ok(Self {
            model,
            partition: Some(partition),
        })
    }

    /// Arbitrary diagonal mixture from per-class eigenvalues and mean
    /// coordinates.
    #[new]
    fn new(probs: Vec<f64>, eigvals: Vec<Vec<f64>>, means: Vec<Vec<f64>>) -> PyResult<Self> {
        spectral::SpectralMixture::new(probs, eigvals, means)
            .map(Self::from)
            .map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.model.dim()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    #[getter]
    fn probs(&self) -> Vec<f64> {
        self.model.probs().to_vec()
    }

    fn eigvals(&self, class: usize) -> PyResult<Vec<f64>> {
        self.check_class(class)?;
        Ok(self.model.eigvals(class).to_vec())
    }

    fn means(&self, class: usize) -> PyResult<Vec<f64>> {
        self.check_class(class)?;
        Ok(self.model.means(class).to_vec())
    }

    fn fingerprint(&self) -> String {
        self.model.fingerprint()
    }

    /// Assumption violations under the default limits, one string each.
    fn validate(&self) -> Vec<String> {
        validate(&self.model, &ModelLimits::default())
            .iter()
            .map(ToString::to_string)
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "SpectralMixture(d={}, classes={}, hash={})",
            self.model.dim(),
            self.model.num_classes(),
            &self.model.fingerprint()[..12]
        )
    }
}

impl PySpectralMixture {
    fn check_class(&self, class: usize) -> PyResult<()> {
        if class >= self.model.num_classes() {
            return Err(PyValueError::new_err(format!(
                "class {class} out of range for {} classes",
                self.model.num_classes()
            )));
        }
        Ok(())
    }
}

/// Loss being trained.
#[pyclass(name = "Task", module = "pygmmdyn", frozen)]
struct PyTask(gmmdyn::Task);

#[pymethods]
impl PyTask {
    #[staticmethod]
    fn binary_logistic() -> Self {
        Self(gmmdyn::Task::BinaryLogistic)
    }

    #[staticmethod]
    fn cross_entropy(classes: usize) -> Self {
        Self(gmmdyn::Task::cross_entropy(classes))
    }

    /// Soft-label square loss against a random linear teacher with
    /// `outputs` columns.
    #[staticmethod]
    #[pyo3(signature = (d, outputs = 1, sigma = 0.0, target_seed = 0))]
    fn mse(d: usize, outputs: usize, sigma: f64, target_seed: u64) -> Self {
        Self(gmmdyn::Task::Mse {
            target: random_target(d, outputs, target_seed),
            sigma,
        })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.0.name()
    }

    fn __repr__(&self) -> String {
        format!("Task({})", self.0.name())
    }
}

fn curve_dict<'py>(py: Python<'py>, curve: &LearningCurve) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("t", curve.times())?;
    for name in curve.column_names() {
        if let Some(col) = curve.column(&name) {
            out.set_item(name, col)?;
        }
    }
    Ok(out)
}

fn grid(times: Vec<f64>) -> PyResult<TimeGrid> {
    TimeGrid::new(times).map_err(err)
}

/// Integrates the deterministic limit at constant rate `gamma` and returns
/// the observables at `times`.
#[pyfunction]
#[pyo3(signature = (model, task, gamma, times, step = None))]
fn integrate_ode<'py>(
    py: Python<'py>,
    model: &PySpectralMixture,
    task: &PyTask,
    gamma: f64,
    times: Vec<f64>,
    step: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let grid = grid(times)?;
    let schedule = Schedule::constant(gamma).map_err(err)?;
    let mut settings = SolverSettings::default();
    if let Some(h) = step {
        settings = settings.with_step(h);
    }
    let curve = py
        .detach(|| {
            integrate_task(
                &model.model,
                &task.0,
                &schedule,
                &grid,
                &settings,
                OdeOptions {
                    partition: model.partition.as_ref(),
                    ..Default::default()
                },
            )
        })
        .map_err(err)?;
    curve_dict(py, &curve)
}

/// Streaming SGD with `floor(T d)` steps, `T = times[-1]`.
#[pyfunction]
#[pyo3(signature = (model, task, gamma, times, seed = 0))]
fn run_sgd<'py>(
    py: Python<'py>,
    model: &PySpectralMixture,
    task: &PyTask,
    gamma: f64,
    times: Vec<f64>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let grid = grid(times)?;
    let schedule = Schedule::constant(gamma).map_err(err)?;
    let curve = py
        .detach(|| {
            sgd(
                &model.model,
                &task.0,
                &schedule,
                &grid,
                seed,
                SgdOptions {
                    partition: model.partition.as_ref(),
                    ..Default::default()
                },
            )
        })
        .map_err(err)?;
    curve_dict(py, &curve)
}

/// `(E[w12], E[w12^2])` for preactivation `N(m, b)`.
#[pyfunction]
#[pyo3(signature = (m, b, nodes = DEFAULT_HERMITE_NODES))]
fn logistic_moments(m: f64, b: f64, nodes: usize) -> PyResult<(f64, f64)> {
    let w = moments(m, b, nodes).map_err(err)?;
    Ok((w.w1, w.w2))
}

#[pyfunction]
fn classify_regime<'py>(py: Python<'py>, alpha: f64, beta: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = asymptotics::classify_regime(alpha, beta).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("alpha", r.alpha)?;
    out.set_item("beta", r.beta)?;
    out.set_item("kappa_mu", r.kappa_mu)?;
    out.set_item("kappa_2", r.kappa_2)?;
    let regime = serde_json::to_value(r.regime).map_err(|e| PyValueError::new_err(e.to_string()))?;
    out.set_item("regime", regime.as_str())?;
    out.set_item("extreme_family", r.extreme_family)?;
    out.set_item("identity", r.identity)?;
    out.set_item("notes", r.notes)?;
    Ok(out)
}

/// Runs a TOML experiment config; returns whether every check passed.
#[pyfunction]
fn run_config(py: Python<'_>, path: PathBuf) -> PyResult<bool> {
    let cfg = parse_config(&path).map_err(err)?;
    let manifest = py.detach(|| run_experiment(&cfg)).map_err(err)?;
    Ok(manifest.ok)
}

#[pymodule]
fn pygmmdyn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpectralMixture>()?;
    m.add_class::<PyTask>()?;
    m.add_function(wrap_pyfunction!(integrate_ode, m)?)?;
    m.add_function(wrap_pyfunction!(run_sgd, m)?)?;
    m.add_function(wrap_pyfunction!(logistic_moments, m)?)?;
    m.add_function(wrap_pyfunction!(classify_regime, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
