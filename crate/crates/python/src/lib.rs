use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use nlscont::asymptotics::{self, CriticalKind};
use nlscont::config::RunConfig;
use nlscont::solver::{newton_fixed_e, NewtonOpts};
use nlscont::{model, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::Io(_) | Error::Unsupported(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn config(json: Option<&str>) -> PyResult<RunConfig> {
    match json {
        Some(t) => RunConfig::from_json(t).map_err(to_py),
        None => Ok(RunConfig::default()),
    }
}

/// Default run configuration as JSON.
#[pyfunction]
fn default_config() -> String {
    RunConfig::default().to_json()
}

/// Interior nodes of the grid described by a configuration.
#[pyfunction]
#[pyo3(signature = (config_json=None))]
fn grid_nodes(config_json: Option<&str>) -> PyResult<Vec<f64>> {
    let p = config(config_json)?.problem().map_err(to_py)?;
    Ok(p.grid.nodes().to_vec())
}

/// Closed-form `V ≡ 0` soliton sampled at `x`.
#[pyfunction]
fn free_soliton(power: f64, gamma: f64, e: f64, x: Vec<f64>) -> Vec<f64> {
    x.iter().map(|&x| model::free_soliton(power, gamma, e, x)).collect()
}

/// Fixed-E Newton solve. Returns `(phi, iterations, final residual)`.
#[pyfunction]
#[pyo3(signature = (phi0, e, config_json=None))]
fn solve(phi0: Vec<f64>, e: f64, config_json: Option<&str>) -> PyResult<(Vec<f64>, usize, f64)> {
    let cfg = config(config_json)?;
    let p = cfg.problem().map_err(to_py)?;
    let opts = NewtonOpts {
        tol_residual: cfg.tolerances.tol_residual,
        max_iter: cfg.tolerances.max_iter,
        ..NewtonOpts::default()
    };
    let r = newton_fixed_e(&p.grid, &p.model, &phi0, e, &opts).map_err(to_py)?;
    let last = r.residuals.last().copied().unwrap_or(f64::NAN);
    Ok((r.phi, r.iterations, last))
}

/// `(energy, charge, kinetic, potential, nonlinear)` of a field.
#[pyfunction]
#[pyo3(signature = (phi, config_json=None))]
fn functionals(phi: Vec<f64>, config_json: Option<&str>) -> PyResult<(f64, f64, f64, f64, f64)> {
    let p = config(config_json)?.problem().map_err(to_py)?;
    let f = model::energy(&p.grid, &p.model, &phi).map_err(to_py)?;
    Ok((f.energy, f.charge, f.kinetic, f.potential, f.nonlinear))
}

/// Large-E limits of `(r_Q, r_K)` for nonlinearity power `p`.
#[pyfunction]
fn predicted_ratios(p: f64) -> (f64, f64) {
    asymptotics::predicted_ratios(p)
}

/// Morse index predicted from `(kind, count)` pairs, kind one of
/// "minimum", "maximum", "degenerate".
#[pyfunction]
fn predicted_morse(placement: Vec<(String, usize)>) -> PyResult<usize> {
    let mut sites = Vec::with_capacity(placement.len());
    for (k, n) in placement {
        let kind = match k.as_str() {
            "minimum" => CriticalKind::Minimum,
            "maximum" => CriticalKind::Maximum,
            "degenerate" => CriticalKind::Degenerate,
            other => return Err(PyValueError::new_err(format!("unknown critical point kind {other:?}"))),
        };
        sites.push((kind, n));
    }
    asymptotics::predicted_morse(&sites).map_err(to_py)
}

/// Traces the bifurcation diagram into `out` and returns the summary JSON.
#[pyfunction]
#[pyo3(signature = (out, config_json=None))]
fn run_diagram(py: Python<'_>, out: PathBuf, config_json: Option<&str>) -> PyResult<String> {
    let cfg = config(config_json)?;
    let s = py.detach(|| nlscont::driver::run_diagram(&cfg, &out)).map_err(to_py)?;
    serde_json::to_string(&s).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn pynlscont(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(grid_nodes, m)?)?;
    m.add_function(wrap_pyfunction!(free_soliton, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(functionals, m)?)?;
    m.add_function(wrap_pyfunction!(predicted_ratios, m)?)?;
    m.add_function(wrap_pyfunction!(predicted_morse, m)?)?;
    m.add_function(wrap_pyfunction!(run_diagram, m)?)?;
    Ok(())
}
