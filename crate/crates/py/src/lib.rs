use std::path::Path;

use levyheat::conv::check_lemma_pp;
use levyheat::experiment::{self, ExperimentConfig, KernelQuery};
use levyheat::solver::{GridSpec, LatticePlan, SigmaSpec};
use levyheat::{Error, FiniteMeasure, KernelModel, NoiseStream};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::ConfigInvalid(_) | Error::InvalidParameter(_) => PyValueError::new_err(e.to_string()),
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

type Field = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>);
type VerdictRow = (String, f64, f64, f64, bool);

fn parse<T: serde::de::DeserializeOwned>(text: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Transition kernel of a symmetric Lévy generator.
#[pyclass(name = "Kernel", frozen)]
struct PyKernel {
    inner: KernelModel,
}

#[pymethods]
impl PyKernel {
    #[staticmethod]
    #[pyo3(signature = (kappa = 1.0))]
    fn brownian(kappa: f64) -> PyResult<Self> {
        Ok(Self { inner: KernelModel::brownian(kappa).map_err(py_err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (alpha, kappa = 1.0))]
    fn stable(alpha: f64, kappa: f64) -> PyResult<Self> {
        Ok(Self { inner: KernelModel::stable(alpha, kappa).map_err(py_err)? })
    }

    #[staticmethod]
    fn tabulated(xi: Vec<f64>, psi: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: KernelModel::tabulated(xi, psi).map_err(py_err)? })
    }

    /// From the JSON kernel spec used in config files.
    #[staticmethod]
    fn from_json(spec: &str) -> PyResult<Self> {
        Ok(Self { inner: KernelModel::from_spec(&parse(spec)?).map_err(py_err)? })
    }

    fn psi(&self, xi: f64) -> f64 {
        self.inner.psi(xi)
    }

    fn p(&self, t: f64, x: f64) -> PyResult<f64> {
        self.inner.p_eval(t, x).map_err(py_err)
    }

    fn theta(&self) -> PyResult<f64> {
        Ok(self.inner.theta().map_err(py_err)?.value)
    }

    fn upsilon(&self, beta: f64) -> PyResult<f64> {
        self.inner.upsilon(beta).map_err(py_err)
    }

    #[pyo3(signature = (k, lip = 1.0))]
    fn gamma(&self, k: f64, lip: f64) -> PyResult<f64> {
        self.inner.gamma_k(k, lip).map_err(py_err)
    }

    fn g(&self, a: f64) -> PyResult<f64> {
        self.inner.g_eval(a).map_err(py_err)
    }

    /// (lower, mid, upper) convolution triple at time t.
    fn pp_triple(&self, t: f64) -> PyResult<(f64, f64, f64)> {
        let p = check_lemma_pp(&self.inner, t).map_err(py_err)?;
        Ok((p.lower, p.mid, p.upper))
    }

    fn __repr__(&self) -> String {
        format!("Kernel({})", self.inner.label())
    }
}

/// Finite nonnegative initial measure.
#[pyclass(name = "Measure", frozen)]
struct PyMeasure {
    inner: FiniteMeasure,
}

#[pymethods]
impl PyMeasure {
    #[staticmethod]
    #[pyo3(signature = (y = 0.0, mass = 1.0))]
    fn dirac(y: f64, mass: f64) -> PyResult<Self> {
        Ok(Self { inner: FiniteMeasure::dirac(y, mass).map_err(py_err)? })
    }

    #[staticmethod]
    fn sampled(grid: Vec<f64>, values: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: FiniteMeasure::sampled(grid, values).map_err(py_err)? })
    }

    #[staticmethod]
    fn positive_definite_example(a: f64) -> PyResult<Self> {
        Ok(Self { inner: FiniteMeasure::make_positive_definite_example(a).map_err(py_err)? })
    }

    #[staticmethod]
    fn from_json(spec: &str) -> PyResult<Self> {
        Ok(Self { inner: parse(spec)? })
    }

    #[getter]
    fn total_mass(&self) -> f64 {
        self.inner.total_mass()
    }

    /// (p_t * u₀)(x) for each x.
    fn heat_convolve(&self, kernel: &PyKernel, t: f64, xs: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.heat_convolve_row(&kernel.inner, t, &xs).map_err(py_err)
    }
}

/// One lattice realization: (t nodes, x nodes, rows of u).
#[pyfunction]
#[pyo3(signature = (kernel, u0, sigma_json, grid_json, seed))]
fn simulate(py: Python<'_>, kernel: &PyKernel, u0: &PyMeasure, sigma_json: &str, grid_json: &str, seed: u64) -> PyResult<Field> {
    let sigma: SigmaSpec = parse(sigma_json)?;
    let grid: GridSpec = parse(grid_json)?;
    py.detach(|| {
        let plan = LatticePlan::new(&kernel.inner, &u0.inner, &grid)?;
        let noise = NoiseStream::new(plan.dt(), plan.dx(), plan.nx(), seed)?;
        let field = plan.evolve(&sigma, &noise, seed)?;
        let rows = (0..field.grid.nt()).map(|i| field.grid.row(i).to_vec()).collect();
        Ok((plan.t_nodes().to_vec(), plan.x_nodes().to_vec(), rows))
    })
    .map_err(py_err)
}

/// A validated experiment config.
#[pyclass(name = "Experiment", frozen)]
struct PyExperiment {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyExperiment {
    #[new]
    fn new(config_json: &str) -> PyResult<Self> {
        Ok(Self { inner: ExperimentConfig::from_json(config_json).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: ExperimentConfig::load(Path::new(path)).map_err(py_err)? })
    }

    #[getter]
    fn config_hash(&self) -> String {
        self.inner.hash()
    }

    /// Claim verdicts as (claim_id, lhs, rhs, std_error, pass) tuples.
    fn verify(&self, py: Python<'_>) -> PyResult<Vec<VerdictRow>> {
        let out = py.detach(|| experiment::evaluate(&self.inner)).map_err(py_err)?;
        Ok(out.verdicts.into_iter().map(|v| (v.claim_id, v.lhs, v.rhs, v.std_error, v.pass)).collect())
    }

    /// Writes the run files into `out_dir`; returns whether every claim passed.
    fn run(&self, py: Python<'_>, out_dir: &str) -> PyResult<bool> {
        let out = py.detach(|| experiment::run(&self.inner, Path::new(out_dir))).map_err(py_err)?;
        Ok(out.all_pass())
    }
}

/// Kernel functionals for a JSON query; returns a JSON string.
#[pyfunction]
fn kernel_info(query: &str) -> PyResult<String> {
    let q: KernelQuery = parse(query)?;
    Ok(experiment::kernel_info(&q).to_string())
}

#[pymodule(name = "levyheat")]
fn levyheat_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernel>()?;
    m.add_class::<PyMeasure>()?;
    m.add_class::<PyExperiment>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_info, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
