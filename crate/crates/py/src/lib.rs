//! Python bindings: sampling, analytic rollouts, training a seed, and
//! loading and analyzing stored runs.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mass_core::analysis::{classify_theory, distill_lagrangian, fit_reference_activations, Formulation};
use mass_core::model::TermCatalog;
use mass_core::physics::{sample_batch, PhasePoint, SystemId};
use mass_core::seed::derived_rng;
use mass_core::sim::{analytic_field, rk4_rollout};
use mass_core::train::{run_curriculum, RunRecord, TrainConfig};
use mass_core::MassError;

fn py_err(e: MassError) -> PyErr {
    match e {
        MassError::Io { .. } => PyIOError::new_err(e.to_string()),
        MassError::Config(_)
        | MassError::UnknownSystem { .. }
        | MassError::DomainError { .. }
        | MassError::Shape(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn system(name: &str) -> PyResult<SystemId> {
    name.parse().map_err(py_err)
}

/// Names of the supported systems.
#[pyfunction]
fn systems() -> Vec<&'static str> {
    SystemId::ALL.iter().map(|s| s.name()).collect()
}

/// Names of the 172 derivative terms, in head order.
#[pyfunction]
fn term_names() -> Vec<String> {
    TermCatalog::standard().names()
}

/// `n` samples of `system`: dict with flat row-major `x`, `y`, `ydot` and `dim`.
#[pyfunction]
#[pyo3(signature = (name, n, seed=0))]
fn sample<'py>(py: Python<'py>, name: &str, n: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let sys = system(name)?;
    let mut rng = derived_rng(seed, "generate", sys.index() as u64);
    let b = sample_batch(&sys.spec(), n, &mut rng).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("dim", b.dim)?;
    d.set_item("x", b.x)?;
    d.set_item("y", b.y)?;
    d.set_item("ydot", b.ydot)?;
    Ok(d)
}

/// RK4 rollout under the true dynamics: dict with `t`, `states`, `energy`.
#[pyfunction]
fn simulate<'py>(
    py: Python<'py>,
    name: &str,
    x: Vec<f64>,
    y: Vec<f64>,
    dt: f64,
    steps: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = system(name)?.spec();
    if x.len() != spec.dim || y.len() != spec.dim {
        return Err(PyValueError::new_err(format!("{name} needs {} coordinates", spec.dim)));
    }
    let traj = rk4_rollout(analytic_field(&spec), &PhasePoint::new(x, y), dt, steps, Some(&spec)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("t", traj.times)?;
    d.set_item("states", traj.states)?;
    d.set_item("energy", traj.energies)?;
    d.set_item("blowup", traj.blowup)?;
    Ok(d)
}

/// One trained seed.
#[pyclass(frozen)]
struct Run {
    inner: RunRecord,
}

#[pymethods]
impl Run {
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// Per-phase correctness flags.
    #[getter]
    fn correct(&self) -> Vec<bool> {
        self.inner.correct_flags()
    }

    /// Active systems per phase.
    #[getter]
    fn phases(&self) -> Vec<Vec<&'static str>> {
        self.inner
            .phases
            .iter()
            .map(|p| p.systems().iter().map(|s| s.name()).collect())
            .collect()
    }

    /// Held-out ydot MSE of `system` at `phase`.
    fn eval_mse(&self, phase: usize, name: &str) -> PyResult<f64> {
        let sys = system(name)?;
        self.inner.phase(phase).and_then(|p| p.eval_mse(sys)).map_err(py_err)
    }

    /// Theory label with the fitted coefficients.
    fn classify<'py>(&self, py: Python<'py>, phase: usize, name: &str) -> PyResult<Bound<'py, PyDict>> {
        let f = classify_theory(&self.inner, phase, system(name)?).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("label", f.label.name())?;
        d.set_item("c", (f.c0, f.c1, f.c2))?;
        d.set_item("r2", f.r2)?;
        Ok(d)
    }

    /// Held-out R² against the reference terms of `"lagrangian"` or `"hamiltonian"`.
    fn reference_r2(&self, phase: usize, name: &str, formulation: &str) -> PyResult<f64> {
        let which = match formulation {
            "lagrangian" => Formulation::Lagrangian,
            "hamiltonian" => Formulation::Hamiltonian,
            other => return Err(PyValueError::new_err(format!("unknown formulation `{other}`"))),
        };
        fit_reference_activations(&self.inner, phase, system(name)?, which).map_err(py_err)
    }

    /// `(r2_train, r2_test)` of the two-term distillation.
    fn distill(&self, phase: usize, name: &str) -> PyResult<(f64, f64)> {
        let r = distill_lagrangian(&self.inner, phase, system(name)?).map_err(py_err)?;
        Ok((r.r2_train, r.r2_test))
    }

    fn save(&self, path: &str) -> PyResult<String> {
        let p = mass_core::store::save_run(&self.inner, path).map_err(py_err)?;
        Ok(p.display().to_string())
    }

    fn __repr__(&self) -> String {
        format!("Run(seed={}, phases={})", self.inner.seed, self.inner.phases.len())
    }
}

/// Trains one seed. `config` is the TOML text of a training config.
#[pyfunction]
#[pyo3(signature = (config, seed=0))]
fn train(py: Python<'_>, config: &str, seed: u64) -> PyResult<Run> {
    let cfg: TrainConfig = toml::from_str(config).map_err(|e| PyValueError::new_err(e.to_string()))?;
    cfg.validate().map_err(py_err)?;
    let inner = py.detach(|| run_curriculum(&cfg, seed)).map_err(py_err)?;
    Ok(Run { inner })
}

/// Loads and verifies a stored run directory.
#[pyfunction]
fn load_run(path: &str) -> PyResult<Run> {
    Ok(Run {
        inner: mass_core::store::load_run(path).map_err(py_err)?,
    })
}

#[pymodule]
fn mass_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(systems, m)?)?;
    m.add_function(wrap_pyfunction!(term_names, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(load_run, m)?)?;
    m.add_class::<Run>()?;
    Ok(())
}
