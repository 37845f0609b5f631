//! Python bindings. Potentials and densities cross the boundary as plain
//! lists of node values on the mesh `x_min..=x_max` with `len(values)` nodes.

use std::path::Path;

use pathinv::experiment::commands::run_reconstruct;
use pathinv::experiment::config::RunConfig;
use pathinv::experiment::potentials::builtin_potential;
use pathinv::experiment::sampling::sample_dataset;
use pathinv::experiment::verify::run_checks;
use pathinv::paths::PathSolverConfig;
use pathinv::reconstruction::LikelihoodBackend;
use pathinv::semiclassical::{classical_density, semiclassical_partition};
use pathinv::spectral::exact_density;
use pathinv::{build_grid, Error, Grid, PhysicsParams, PotentialField};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    if e.is_usage() || matches!(e, Error::Domain(_) | Error::DimensionMismatch { .. }) {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn setup(
    values: Vec<f64>,
    x_min: f64,
    x_max: f64,
    n_tau: usize,
    mass: f64,
    beta: f64,
) -> pathinv::Result<(Grid, PhysicsParams, PotentialField)> {
    let p = PhysicsParams::new(mass, beta)?;
    let g = build_grid(values.len(), x_min, x_max, n_tau, &p)?;
    Ok((g, p, PotentialField::new(values)?))
}

/// Normalized density of `values` under `backend` (classical, semiclassical
/// or exact).
pub fn density(
    backend: &str,
    values: Vec<f64>,
    x_min: f64,
    x_max: f64,
    n_tau: usize,
    mass: f64,
    beta: f64,
) -> pathinv::Result<Vec<f64>> {
    let (g, p, v) = setup(values, x_min, x_max, n_tau, mass, beta)?;
    let d = match backend {
        "classical" => classical_density(&v, &g, &p),
        "semiclassical" => semiclassical_partition(&v, &g, &p, &PathSolverConfig::default())?.normalized(),
        "exact" => exact_density(&v, &g, &p)?,
        other => return Err(Error::Config(format!("unknown backend '{other}'"))),
    };
    Ok(d.values)
}

pub fn builtin(name: &str, n_x: usize, x_min: f64, x_max: f64) -> pathinv::Result<Vec<f64>> {
    let p = PhysicsParams::new(1.0, 1.0)?;
    let g = build_grid(n_x, x_min, x_max, 2, &p)?;
    Ok(builtin_potential(name.parse()?, &g)?.values().to_vec())
}

pub fn sample(
    values: Vec<f64>,
    x_min: f64,
    x_max: f64,
    mass: f64,
    beta: f64,
    n: usize,
    seed: u64,
) -> pathinv::Result<Vec<usize>> {
    let (g, p, v) = setup(values, x_min, x_max, 2, mass, beta)?;
    Ok(sample_dataset(&v, &g, &p, n, seed)?.nodes)
}

/// Runs `reconstruct` and returns the manifest as JSON text.
pub fn reconstruct_config(
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    backend: Option<&str>,
) -> pathinv::Result<String> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.sampling.seed = s;
    }
    if let Some(b) = backend {
        let b: LikelihoodBackend = serde_json::from_value(serde_json::Value::String(b.into()))
            .map_err(|_| Error::Config(format!("unknown backend '{b}'")))?;
        cfg.set_backend(b);
    }
    Ok(serde_json::to_string(&run_reconstruct(&cfg, out)?)?)
}

#[pyfunction(name = "density")]
#[pyo3(signature = (backend, values, x_min, x_max, n_tau, mass, beta))]
fn py_density(
    backend: &str,
    values: Vec<f64>,
    x_min: f64,
    x_max: f64,
    n_tau: usize,
    mass: f64,
    beta: f64,
) -> PyResult<Vec<f64>> {
    density(backend, values, x_min, x_max, n_tau, mass, beta).map_err(to_py)
}

/// `fermi_well`, `cosine_well`, `zero` or `harmonic(OMEGA)` on the mesh.
#[pyfunction(name = "builtin_potential")]
fn py_builtin(name: &str, n_x: usize, x_min: f64, x_max: f64) -> PyResult<Vec<f64>> {
    builtin(name, n_x, x_min, x_max).map_err(to_py)
}

/// Node indices drawn from the exact thermal density.
#[pyfunction(name = "sample_dataset")]
fn py_sample(
    values: Vec<f64>,
    x_min: f64,
    x_max: f64,
    mass: f64,
    beta: f64,
    n: usize,
    seed: u64,
) -> PyResult<Vec<usize>> {
    sample(values, x_min, x_max, mass, beta, n, seed).map_err(to_py)
}

#[pyfunction(name = "reconstruct")]
#[pyo3(signature = (config, out, seed=None, backend=None))]
fn py_reconstruct(
    py: Python<'_>,
    config: &str,
    out: &str,
    seed: Option<u64>,
    backend: Option<&str>,
) -> PyResult<String> {
    py.detach(|| reconstruct_config(Path::new(config), Path::new(out), seed, backend))
        .map_err(to_py)
}

/// `(id, passed, detail)` for each requested oracle.
#[pyfunction(name = "verify")]
fn py_verify(py: Python<'_>, ids: Vec<u8>) -> Vec<(u8, bool, String)> {
    py.detach(|| {
        run_checks(&ids)
            .into_iter()
            .map(|c| (c.id, c.passed, c.detail))
            .collect()
    })
}

#[pymodule]
fn pathinv_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(py_density, m)?)?;
    m.add_function(wrap_pyfunction!(py_builtin, m)?)?;
    m.add_function(wrap_pyfunction!(py_sample, m)?)?;
    m.add_function(wrap_pyfunction!(py_reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(py_verify, m)?)?;
    Ok(())
}
