//! Python bindings: disk points, Blaschke products, generators and the full
//! pipeline.

use blaschke_approx::contour::build_contour_with;
use blaschke_approx::geometry;
use blaschke_approx::pipeline::{self, GeneratorSpec, RunConfig};
use blaschke_approx::{BlaschkeProduct, DiskPoint};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "DiskPoint", frozen, from_py_object)]
#[derive(Clone, Copy)]
pub struct PyDiskPoint(DiskPoint);

#[pymethods]
impl PyDiskPoint {
    #[new]
    fn new(re: f64, im: f64) -> PyResult<Self> {
        DiskPoint::new(re, im).map(Self).map_err(err)
    }

    #[getter]
    fn re(&self) -> f64 {
        self.0.re
    }

    #[getter]
    fn im(&self) -> f64 {
        self.0.im
    }

    fn __abs__(&self) -> f64 {
        self.0.abs()
    }

    /// Pseudohyperbolic distance `ρ`.
    fn rho(&self, other: &PyDiskPoint) -> f64 {
        geometry::pseudo_dist(self.0, other.0)
    }

    /// Hyperbolic distance `β = artanh ρ`.
    fn beta(&self, other: &PyDiskPoint) -> f64 {
        geometry::hyp_dist(self.0, other.0)
    }

    /// `(a − z)/(1 − āz)` applied to this point.
    fn mobius(&self, a: &PyDiskPoint) -> PyDiskPoint {
        PyDiskPoint(geometry::mobius(a.0, self.0))
    }

    fn __repr__(&self) -> String {
        format!("DiskPoint({}, {})", self.0.re, self.0.im)
    }
}

fn points(zeros: Vec<(f64, f64)>) -> PyResult<Vec<DiskPoint>> {
    zeros.into_iter().map(|(re, im)| DiskPoint::new(re, im).map_err(err)).collect()
}

#[pyclass(name = "BlaschkeProduct", frozen)]
pub struct PyBlaschkeProduct(BlaschkeProduct);

#[pymethods]
impl PyBlaschkeProduct {
    /// Zeros as `(re, im)` pairs; zeros at the origin fold into `z^m`.
    #[new]
    fn new(zeros: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(Self(BlaschkeProduct::from_zeros(points(zeros)?)))
    }

    #[getter]
    fn degree(&self) -> usize {
        self.0.degree()
    }

    fn zeros(&self) -> Vec<(f64, f64)> {
        self.0.all_zeros().map(|z| (z.re, z.im)).collect()
    }

    fn modulus(&self, re: f64, im: f64) -> PyResult<f64> {
        Ok(self.0.eval_modulus(DiskPoint::new(re, im).map_err(err)?))
    }

    fn log_modulus(&self, re: f64, im: f64) -> PyResult<f64> {
        self.0.log_modulus(DiskPoint::new(re, im).map_err(err)?).map_err(err)
    }

    fn __call__(&self, re: f64, im: f64) -> PyResult<(f64, f64)> {
        let v = self.0.eval(DiskPoint::new(re, im).map_err(err)?);
        Ok((v.re, v.im))
    }

    /// Contour build as JSON, with the pipeline's `ε/2`.
    #[pyo3(signature = (epsilon=0.25, big_n=4, k=None, mesh=0.1, d_max=16))]
    fn contour(&self, epsilon: f64, big_n: u32, k: Option<f64>, mesh: f64, d_max: u32) -> PyResult<String> {
        let cfg = RunConfig { epsilon, big_n, k, mesh, d_max, ..Default::default() };
        cfg.validate().map_err(err)?;
        let build = build_contour_with(&self.0, &cfg.contour_config()).map_err(err)?;
        serde_json::to_string(&build).map_err(err)
    }
}

/// Zeros from a generator spec such as `cluster(200, 0.9, 0.5)`.
#[pyfunction]
#[pyo3(signature = (spec, seed=0))]
fn generate(spec: &str, seed: u64) -> PyResult<Vec<(f64, f64)>> {
    let spec = GeneratorSpec::parse(spec).map_err(err)?;
    Ok(pipeline::generate(&spec, seed).map_err(err)?.into_iter().map(|z| (z.re, z.im)).collect())
}

/// Runs the pipeline and returns the record as JSON. `input` is a generator
/// spec or a zero-set path; keyword options use the config-file keys.
#[pyfunction]
#[pyo3(signature = (input, **options))]
fn run(py: Python<'_>, input: &str, options: Option<&Bound<'_, PyDict>>) -> PyResult<String> {
    let mut cfg = RunConfig::default();
    cfg.set("input", input).map_err(err)?;
    if let Some(opts) = options {
        for (k, v) in opts.iter() {
            let key: String = k.extract()?;
            let value = match v.extract::<bool>() {
                Ok(b) => b.to_string(),
                Err(_) => v.str()?.to_string(),
            };
            cfg.set(&key, &value).map_err(err)?;
        }
    }
    let art = py.detach(|| pipeline::run(&cfg)).map_err(err)?;
    serde_json::to_string(&art.record).map_err(err)
}

#[pymodule]
fn pyblaschke(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDiskPoint>()?;
    m.add_class::<PyBlaschkeProduct>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
