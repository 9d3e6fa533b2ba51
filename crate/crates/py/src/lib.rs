//! Python bindings: config-driven runs plus a few direct entry points.

use std::path::PathBuf;

use hamsim::circuits::ParamCircuit;
use hamsim::experiment::{default_config_text, parse_config, run, Overrides, RunOptions};
use hamsim::metrics::{circuit_approximation_error, noise_floor as floor, ExactEvolution, NoiseModel};
use hamsim::mpo::HamiltonianSpec;
use hamsim::trotter::{trotter_circuit, TrotterOrder, TrotterSpec};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn numeric(e: hamsim::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Diagnostics for a config text; empty when it is valid.
#[pyfunction]
#[pyo3(signature = (text, seed=None))]
fn validate_config(text: &str, seed: Option<u64>) -> Vec<String> {
    match parse_config(text, &Overrides { seed }) {
        Ok(_) => Vec::new(),
        Err(d) => d.iter().map(|x| x.to_string()).collect(),
    }
}

/// Runs a config and returns the paths of the files written.
#[pyfunction]
#[pyo3(signature = (text, out_dir, threads=1, seed=None))]
fn run_config(py: Python<'_>, text: &str, out_dir: PathBuf, threads: usize, seed: Option<u64>) -> PyResult<Vec<PathBuf>> {
    let cfg = parse_config(text, &Overrides { seed }).map_err(|d| PyValueError::new_err(d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("\n")))?;
    let opts = RunOptions { out_dir: out_dir.clone(), threads, base_dir: out_dir };
    py.detach(|| run(&cfg, &opts)).map(|o| o.files).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pyfunction]
fn default_config() -> String {
    default_config_text()
}

/// `ε_approx` of a Trotter circuit for the chain with couplings `(j, g, h)` at time `t`.
#[pyfunction]
#[pyo3(signature = (n, order, reps, t, j=2.0, g=1.0, h=1.0))]
fn trotter_error(n: usize, order: &str, reps: usize, t: f64, j: f64, g: f64, h: f64) -> PyResult<f64> {
    let order = TrotterOrder::parse(order).ok_or_else(|| PyValueError::new_err(format!("unknown Trotter order '{order}'")))?;
    let spec = HamiltonianSpec::new(n, j, g, h).map_err(numeric)?;
    let c = trotter_circuit(&TrotterSpec { order, reps, spec, t }).map_err(numeric)?;
    let ev = ExactEvolution::new(&spec).map_err(numeric)?;
    circuit_approximation_error(&c, &ev, t).map_err(numeric)
}

/// Parameter count and two-qubit gate count of a circuit in the text format.
#[pyfunction]
fn circuit_summary(text: &str) -> PyResult<(usize, usize, usize)> {
    let c = ParamCircuit::from_text(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((c.n(), c.num_params(), c.two_qubit_count()))
}

#[pyfunction]
fn noise_floor(p: f64, gates: usize) -> PyResult<f64> {
    floor(&NoiseModel { p, gates }).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn hamsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(trotter_error, m)?)?;
    m.add_function(wrap_pyfunction!(circuit_summary, m)?)?;
    m.add_function(wrap_pyfunction!(noise_floor, m)?)?;
    Ok(())
}
