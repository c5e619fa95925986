//! Python bindings: design spaces, posterior fitting and sampling,
//! acquisition QUBOs, the solvers and the `run` / `report` commands.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qubo_bo::cli::{self, RunOptions};
use qubo_bo::{
    Backend, BetaSchedule, BitVector, CoefficientSample, Dataset, Error, SolverConfig,
};

create_exception!(qubo_bo_py, QuboBoError, PyException);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::ConfigParse { .. } | Error::InvalidParameter { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => QuboBoError::new_err(e.to_string()),
    }
}

fn bits(s: &str) -> PyResult<BitVector> {
    s.parse().map_err(to_py)
}

/// Categorical sites, binary encoded most significant bit first.
#[pyclass(module = "qubo_bo_py", frozen)]
struct DesignSpace {
    inner: qubo_bo::DesignSpace,
}

#[pymethods]
impl DesignSpace {
    #[new]
    #[pyo3(signature = (cardinalities, names=None))]
    fn new(cardinalities: Vec<usize>, names: Option<Vec<String>>) -> PyResult<Self> {
        let inner = match names {
            None => qubo_bo::DesignSpace::from_cardinalities(&cardinalities),
            Some(names) if names.len() == cardinalities.len() => qubo_bo::DesignSpace::new(
                names
                    .into_iter()
                    .zip(cardinalities)
                    .map(|(n, k)| qubo_bo::SiteSpec::new(n, k))
                    .collect(),
            ),
            Some(_) => return Err(PyValueError::new_err("names and cardinalities differ in length")),
        }
        .map_err(to_py)?;
        Ok(DesignSpace { inner })
    }

    #[getter]
    fn total_bits(&self) -> usize {
        self.inner.total_bits()
    }

    #[getter]
    fn size(&self) -> u64 {
        self.inner.size()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.sites().iter().map(|s| s.name.clone()).collect()
    }

    fn encode(&self, assignment: Vec<usize>) -> PyResult<String> {
        Ok(qubo_bo::encode(&self.inner, &assignment).map_err(to_py)?.to_string())
    }

    /// Returns `(indices, feasible)`.
    fn decode(&self, x: &str) -> PyResult<(Vec<usize>, bool)> {
        let d = qubo_bo::decode(&self.inner, &bits(x)?).map_err(to_py)?;
        Ok((d.indices, d.feasible))
    }

    fn is_feasible(&self, x: &str) -> PyResult<bool> {
        qubo_bo::is_feasible(&self.inner, &bits(x)?).map_err(to_py)
    }

    /// Bit pairs whose joint activation is penalized.
    fn penalty_pairs(&self) -> Vec<(usize, usize)> {
        qubo_bo::build_penalty_spec(&self.inner)
            .pair_terms
            .iter()
            .map(|p| (p.i, p.j))
            .collect()
    }

    /// Invalid codes per site that no penalty pair blocks.
    fn residual_codes(&self) -> Vec<(usize, Vec<usize>)> {
        qubo_bo::build_penalty_spec(&self.inner)
            .residual_infeasible
            .into_iter()
            .map(|r| (r.site, r.codes))
            .collect()
    }

    fn __repr__(&self) -> String {
        let k: Vec<String> = self.inner.sites().iter().map(|s| s.cardinality.to_string()).collect();
        format!("DesignSpace([{}])", k.join(", "))
    }
}

/// Bayesian ridge posterior over the quadratic surrogate's coefficients.
#[pyclass(module = "qubo_bo_py", frozen)]
struct Posterior {
    inner: qubo_bo::PosteriorModel,
    data: Dataset,
}

#[pymethods]
impl Posterior {
    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mean().to_vec()
    }

    #[getter]
    fn n_bits(&self) -> usize {
        self.inner.feature_map().n_bits()
    }

    fn sample(&self, seed: u64) -> PyResult<Vec<f64>> {
        let s = qubo_bo::sample_coefficients(&self.inner, &mut ChaCha8Rng::seed_from_u64(seed))
            .map_err(to_py)?;
        Ok(s.values().to_vec())
    }

    fn predict(&self, x: &str) -> PyResult<f64> {
        qubo_bo::predict(&self.inner.mean_sample(), &bits(x)?).map_err(to_py)
    }

    /// In-sample R² of the mean on the data the posterior was fit to.
    fn r_squared(&self) -> PyResult<f64> {
        qubo_bo::r_squared(&self.inner, &self.data).map_err(to_py)
    }
}

/// Fits the posterior to bit strings `xs` with observed values `ys`.
#[pyfunction]
#[pyo3(signature = (xs, ys, lam=0.01, sigma2=0.0))]
fn fit_posterior(xs: Vec<String>, ys: Vec<f64>, lam: f64, sigma2: f64) -> PyResult<Posterior> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(PyValueError::new_err("xs and ys must be non-empty and equally long"));
    }
    let first = bits(&xs[0])?;
    let mut data = Dataset::new(first.len());
    for (x, y) in xs.iter().zip(ys) {
        data.push(bits(x)?, y, 0).map_err(to_py)?;
    }
    let inner = qubo_bo::fit_posterior(&data, lam, sigma2).map_err(to_py)?;
    Ok(Posterior { inner, data })
}

#[pyclass(module = "qubo_bo_py", frozen)]
struct Qubo {
    inner: qubo_bo::QuboProblem,
}

#[pymethods]
impl Qubo {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Qubo {
            inner: qubo_bo::QuboProblem::from_text(text).map_err(to_py)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn n_vars(&self) -> usize {
        self.inner.n_vars
    }

    fn energy(&self, x: &str) -> PyResult<f64> {
        qubo_bo::energy(&self.inner, &bits(x)?).map_err(to_py)
    }

    fn coefficient(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.inner.linear.get(i).copied().unwrap_or(0.0)
        } else {
            self.inner.quadratic_coef(i, j)
        }
    }

    /// Minimizes the QUBO; returns `(bits, energy, multiplicity)` best first.
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (backend="simulated_annealing", reads=300, sweeps=1000, seed=0, beta=None, command=None))]
    fn solve(
        &self,
        py: Python<'_>,
        backend: &str,
        reads: usize,
        sweeps: usize,
        seed: u64,
        beta: Option<(f64, f64)>,
        command: Option<PathBuf>,
    ) -> PyResult<Vec<(String, f64, usize)>> {
        let backend = match (backend, command) {
            ("exhaustive", _) => Backend::Exhaustive,
            ("simulated_annealing", _) => Backend::SimulatedAnnealing,
            ("external", Some(command)) => Backend::ExternalAdapter { command, args: Vec::new() },
            ("external", None) => return Err(PyValueError::new_err("external backend needs a command")),
            (other, _) => return Err(PyValueError::new_err(format!("unknown backend `{other}`"))),
        };
        let beta = beta.map_or(BetaSchedule::Auto, |(start, end)| BetaSchedule::Geometric { start, end });
        let cfg = SolverConfig { backend, reads, sweeps, beta, seed };
        let pool = py
            .detach(|| qubo_bo::solve(&self.inner, &cfg))
            .map_err(to_py)?;
        Ok(pool
            .entries
            .into_iter()
            .map(|e| (e.x.to_string(), e.energy, e.multiplicity))
            .collect())
    }
}

/// Acquisition QUBO for a coefficient vector, penalized for `space`.
#[pyfunction]
fn build_acquisition(space: &DesignSpace, alpha: Vec<f64>) -> PyResult<Qubo> {
    let sample = CoefficientSample::new(space.inner.total_bits(), alpha).map_err(to_py)?;
    let penalties = qubo_bo::build_penalty_spec(&space.inner);
    Ok(Qubo {
        inner: qubo_bo::build_acquisition(&sample, &penalties).map_err(to_py)?,
    })
}

/// Runs the sweep in a config file and writes traces, reports and a manifest
/// to `out`. Returns the summary table as a list of dicts.
#[pyfunction]
#[pyo3(signature = (config, out, seed=None, threshold=None, resume=false))]
fn run<'py>(
    py: Python<'py>,
    config: PathBuf,
    out: PathBuf,
    seed: Option<u64>,
    threshold: Option<f64>,
    resume: bool,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let opts = RunOptions { seed, threshold, resume };
    let artifacts = py
        .detach(|| cli::cmd_run(&config, &out, &opts))
        .map_err(to_py)?;
    if !artifacts.aborted.is_empty() {
        return Err(QuboBoError::new_err(format!("runs aborted: {}", artifacts.aborted.join(", "))));
    }
    report(py, artifacts.traces, out, threshold)
}

/// Rebuilds the report tables from traces; returns the summary rows.
#[pyfunction]
#[pyo3(signature = (traces, out, threshold=None))]
fn report<'py>(
    py: Python<'py>,
    traces: Vec<PathBuf>,
    out: PathBuf,
    threshold: Option<f64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let bundle = py
        .detach(|| cli::cmd_report(&traces, &out, threshold))
        .map_err(to_py)?;
    bundle
        .summary
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("run", &r.run)?;
            d.set_item("sigma2", r.sigma2)?;
            d.set_item("loops_completed", r.loops_completed)?;
            d.set_item("points_added", r.points_added)?;
            d.set_item("best_initial", r.best_initial)?;
            d.set_item("best_final", r.best_final)?;
            d.set_item("above_threshold", r.above_threshold)?;
            d.set_item("distinct_site_values", r.distinct_site_values)?;
            d.set_item("final_r2", r.final_r2)?;
            Ok(d)
        })
        .collect()
}

/// Findings for a dataset CSV, as strings; empty when clean.
#[pyfunction]
fn validate_dataset(path: PathBuf, space: &DesignSpace) -> PyResult<Vec<String>> {
    Ok(cli::cmd_validate_dataset(&path, &space.inner)
        .map_err(to_py)?
        .iter()
        .map(ToString::to_string)
        .collect())
}

#[pymodule]
fn qubo_bo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("QuboBoError", m.py().get_type::<QuboBoError>())?;
    m.add_class::<DesignSpace>()?;
    m.add_class::<Posterior>()?;
    m.add_class::<Qubo>()?;
    m.add_function(wrap_pyfunction!(fit_posterior, m)?)?;
    m.add_function(wrap_pyfunction!(build_acquisition, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add_function(wrap_pyfunction!(validate_dataset, m)?)?;
    Ok(())
}
