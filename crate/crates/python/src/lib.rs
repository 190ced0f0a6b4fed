//! Python bindings: genomes and their variation, Fréchet distance, the
//! adversarial losses, and whole experiment runs.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use coegan_core::experiment::{self, RunConfig};
use coegan_core::fitness::GaussianSummary;
use coegan_core::genome::{self, GeneRanges, InnovationCounter, Role};
use coegan_core::rng::rng_from_seed;
use coegan_core::variation::{mutate, MutationRates};

fn runtime(e: coegan_core::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn role(name: &str) -> PyResult<Role> {
    Role::from_name(name).ok_or_else(|| PyValueError::new_err(format!("unknown role `{name}`")))
}

/// Source of fresh innovation ids shared by a family of genomes.
#[pyclass(name = "Innovations")]
#[derive(Default)]
struct PyInnovations(InnovationCounter);

#[pymethods]
impl PyInnovations {
    #[new]
    #[pyo3(signature = (next = 1))]
    fn new(next: u64) -> Self {
        PyInnovations(InnovationCounter::new(next))
    }

    fn peek(&self) -> u64 {
        self.0.peek()
    }
}

#[pyclass(name = "Genome", from_py_object)]
#[derive(Clone)]
struct PyGenome(genome::Genome);

#[pymethods]
impl PyGenome {
    /// A one-gene genome for `role` ("generator" or "discriminator").
    #[staticmethod]
    #[pyo3(signature = (role_name, innovations, seed, max_len = 6))]
    fn minimal(role_name: &str, innovations: &PyInnovations, seed: u64, max_len: usize) -> PyResult<Self> {
        let mut rng = rng_from_seed(seed);
        Ok(PyGenome(genome::new_minimal_genome(
            role(role_name)?,
            max_len,
            &GeneRanges::default(),
            &innovations.0,
            &mut rng,
        )))
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        genome::parse_genome(&mut text.lines())
            .map(PyGenome)
            .map_err(PyValueError::new_err)
    }

    /// Returns the mutated child and which mutations were applied.
    #[pyo3(signature = (innovations, seed, add = 0.2, remove = 0.1, change = 0.1))]
    fn mutate(
        &self,
        py: Python<'_>,
        innovations: &PyInnovations,
        seed: u64,
        add: f64,
        remove: f64,
        change: f64,
    ) -> PyResult<(PyGenome, Py<PyDict>)> {
        let rates = MutationRates {
            add_layer: add,
            remove_layer: remove,
            change_layer: change,
        };
        let (child, report) = mutate(&self.0, &rates, &GeneRanges::default(), &innovations.0, &mut rng_from_seed(seed));
        let applied = PyDict::new(py);
        applied.set_item("add", report.add_applied)?;
        applied.set_item("remove", report.remove_applied)?;
        applied.set_item("change", report.change_applied)?;
        Ok((PyGenome(child), applied.unbind()))
    }

    fn distance(&self, other: &PyGenome) -> usize {
        genome::distance(&self.0, &other.0)
    }

    fn is_valid(&self) -> bool {
        genome::validate(&self.0).is_ok()
    }

    #[getter]
    fn role(&self) -> &'static str {
        self.0.role.name()
    }

    #[getter]
    fn innovation_ids(&self) -> Vec<u64> {
        self.0.innovation_ids().into_iter().collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __str__(&self) -> String {
        genome::write_genome(&self.0)
    }
}

fn summary(mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> PyResult<GaussianSummary> {
    let d = mean.len();
    if covariance.len() != d || covariance.iter().any(|row| row.len() != d) {
        return Err(PyValueError::new_err("covariance must be a square matrix matching the mean"));
    }
    Ok(GaussianSummary {
        mean: DVector::from_vec(mean),
        covariance: DMatrix::from_fn(d, d, |i, j| covariance[i][j]),
    })
}

/// Fréchet distance between two Gaussians given as mean vectors and covariance matrices.
#[pyfunction]
fn frechet_distance(
    mean_a: Vec<f64>,
    cov_a: Vec<Vec<f64>>,
    mean_b: Vec<f64>,
    cov_b: Vec<Vec<f64>>,
) -> PyResult<f64> {
    coegan_core::fitness::frechet_distance(&summary(mean_a, cov_a)?, &summary(mean_b, cov_b)?).map_err(runtime)
}

#[pyfunction]
fn d_loss(d_real: Vec<f64>, d_fake: Vec<f64>) -> PyResult<f64> {
    coegan_core::gan::d_loss(&d_real, &d_fake).map_err(runtime)
}

#[pyfunction]
fn g_loss(d_fake: Vec<f64>) -> PyResult<f64> {
    coegan_core::gan::g_loss(&d_fake).map_err(runtime)
}

/// Runs an experiment configured by TOML text into `out_dir` and returns one
/// metrics dict per generation.
#[pyfunction]
#[pyo3(signature = (config_toml, out_dir, stop_after = None))]
fn run(py: Python<'_>, config_toml: &str, out_dir: PathBuf, stop_after: Option<usize>) -> PyResult<Vec<Py<PyDict>>> {
    let mut config = RunConfig::from_toml(config_toml).map_err(runtime)?;
    config.out_dir = out_dir;
    let outcome = py
        .detach(|| experiment::run(&config, stop_after))
        .map_err(runtime)?;
    outcome
        .records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("generation", r.generation)?;
            d.set_item("best_fid", r.best_fid)?;
            d.set_item("rmse", r.rmse)?;
            d.set_item("classifier_score", r.classifier_score)?;
            d.set_item("mode_coverage", r.mode_coverage)?;
            d.set_item("mean_d_loss", r.mean_d_loss)?;
            d.set_item("mean_g_loss", r.mean_g_loss)?;
            d.set_item("generator_layers", r.generator.mean_layers)?;
            d.set_item("discriminator_layers", r.discriminator.mean_layers)?;
            Ok(d.unbind())
        })
        .collect()
}

#[pymodule]
fn coegan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInnovations>()?;
    m.add_class::<PyGenome>()?;
    m.add_function(wrap_pyfunction!(frechet_distance, m)?)?;
    m.add_function(wrap_pyfunction!(d_loss, m)?)?;
    m.add_function(wrap_pyfunction!(g_loss, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
