//! Python bindings: configuration handling, Monte Carlo Greeks and the
//! closed-form reference values.

use levy_greeks::cli::{self, ConfigError, RunConfig};
use levy_greeks::estimator::{estimate_expectation, estimate_greeks_weighted, EstimatorReport};
use levy_greeks::levy::{LevyFamily, LevyMeasure, OrderExponent};
use levy_greeks::oracle::{self, Contract, ContractKind, MertonParams, OracleValues, DEFAULT_MERTON_TERMS};
use levy_greeks::tolerances::ARTIFACT_VERSION;
use levy_greeks::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) | Error::Domain(_) | Error::UnknownParameter(_) | Error::Config(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse(text: &str) -> PyResult<RunConfig> {
    cli::parse_config(text).map_err(|errs: Vec<ConfigError>| {
        PyValueError::new_err(errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))
    })
}

fn record<'py>(py: Python<'py>, r: &EstimatorReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("quantity", &r.quantity)?;
    d.set_item("mode", &r.mode)?;
    d.set_item("estimate", r.estimate)?;
    d.set_item("se", r.std_error)?;
    d.set_item("ci_lo", r.ci_lo)?;
    d.set_item("ci_hi", r.ci_hi)?;
    d.set_item("n_paths", r.n_paths)?;
    d.set_item("n_excluded", r.n_excluded)?;
    d.set_item("n_steps", r.n_steps)?;
    d.set_item("seed", r.seed)?;
    d.set_item("runtime_ms", r.runtime_ms)?;
    d.set_item("artifact_version", ARTIFACT_VERSION)?;
    Ok(d)
}

fn oracle_dict<'py>(py: Python<'py>, v: &OracleValues) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("price", v.price)?;
    d.set_item("delta", v.delta)?;
    d.set_item("gamma", v.gamma)?;
    d.set_item("vega", v.vega)?;
    d.set_item("remainder_bound", v.remainder_bound)?;
    Ok(d)
}

fn contract(kind: &str, strike: f64, maturity: f64) -> PyResult<Contract> {
    let kind = match kind {
        "call" => ContractKind::Call,
        "put" => ContractKind::Put,
        "digital" => ContractKind::Digital,
        _ => return Err(PyValueError::new_err(format!("unknown contract kind '{kind}'"))),
    };
    Ok(Contract { kind, strike, maturity })
}

/// Canonical text of a configuration; raises `ValueError` listing every problem.
#[pyfunction]
fn canonical_config(text: &str) -> PyResult<String> {
    Ok(parse(text)?.emit())
}

/// SHA-256 of the canonical configuration text.
#[pyfunction]
fn config_sha256(text: &str) -> PyResult<String> {
    Ok(parse(text)?.sha256())
}

/// Weighted Greeks requested in `[run]`, one dict per quantity.
#[pyfunction]
#[pyo3(signature = (text, n_paths=None, seed=None))]
fn greeks<'py>(
    py: Python<'py>,
    text: &str,
    n_paths: Option<usize>,
    seed: Option<u64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = parse(text)?;
    let exp = cfg.experiment().map_err(to_py)?;
    let req = cli::weight_request(&cfg, &cli::requested_greeks(&cfg));
    let n = n_paths.unwrap_or(cfg.run.n_paths());
    let s = seed.unwrap_or(cfg.run.seed());
    let reports = py.detach(|| estimate_greeks_weighted(&exp, &req, n, s)).map_err(to_py)?;
    reports.iter().map(|r| record(py, r)).collect()
}

/// Monte Carlo mean of the payoff.
#[pyfunction]
#[pyo3(signature = (text, n_paths=None, seed=None))]
fn price<'py>(py: Python<'py>, text: &str, n_paths: Option<usize>, seed: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = parse(text)?;
    let exp = cfg.experiment().map_err(to_py)?;
    let n = n_paths.unwrap_or(cfg.run.n_paths());
    let s = seed.unwrap_or(cfg.run.seed());
    let r = py.detach(|| estimate_expectation(&exp, n, s)).map_err(to_py)?;
    record(py, &r)
}

/// Weighted, finite-difference and closed-form values side by side.
#[pyfunction]
#[pyo3(signature = (text, n_paths=None, seed=None))]
fn compare<'py>(
    py: Python<'py>,
    text: &str,
    n_paths: Option<usize>,
    seed: Option<u64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = parse(text)?;
    let exp = cfg.experiment().map_err(to_py)?;
    let list = cli::requested_greeks(&cfg);
    let mut req = cli::weight_request(&cfg, &list);
    req.example_forms = false;
    let n = n_paths.unwrap_or(cfg.run.n_paths());
    let s = seed.unwrap_or(cfg.run.seed());
    let rows = py.detach(|| cli::compare(&exp, &req, &list, n, s)).map_err(to_py)?;
    rows.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("quantity", &r.quantity)?;
            d.set_item("mode", &r.mode)?;
            d.set_item("weighted", r.weighted)?;
            d.set_item("weighted_se", r.weighted_se)?;
            d.set_item("fd", r.fd)?;
            d.set_item("fd_se", r.fd_se)?;
            d.set_item("fd_bump", r.fd_bump)?;
            d.set_item("analytic", r.analytic)?;
            d.set_item("z_fd", r.z_fd)?;
            d.set_item("z_analytic", r.z_analytic)?;
            d.set_item("pass", r.pass)?;
            Ok(d)
        })
        .collect()
}

/// Log-normal price and Greeks with `log S_T ~ N(log S_0 + log_drift T, sigma^2 T)`.
#[pyfunction]
#[pyo3(signature = (spot, sigma, log_drift, strike, maturity, kind="call"))]
fn black_scholes<'py>(
    py: Python<'py>,
    spot: f64,
    sigma: f64,
    log_drift: f64,
    strike: f64,
    maturity: f64,
    kind: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let v = oracle::black_scholes(spot, sigma, log_drift, &contract(kind, strike, maturity)?).map_err(to_py)?;
    oracle_dict(py, &v)
}

/// Merton series with Gaussian log-jumps `jump_scale * N(jump_mean, jump_sd^2)`.
#[pyfunction]
#[pyo3(signature = (spot, sigma, log_drift, intensity, jump_mean, jump_sd, strike, maturity, kind="call", jump_scale=1.0, n_terms=DEFAULT_MERTON_TERMS))]
#[allow(clippy::too_many_arguments)]
fn merton<'py>(
    py: Python<'py>,
    spot: f64,
    sigma: f64,
    log_drift: f64,
    intensity: f64,
    jump_mean: f64,
    jump_sd: f64,
    strike: f64,
    maturity: f64,
    kind: &str,
    jump_scale: f64,
    n_terms: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let p = MertonParams { sigma, log_drift, intensity, jump_mean, jump_sd, jump_scale, n_terms };
    let v = oracle::merton_series(spot, &p, &contract(kind, strike, maturity)?).map_err(to_py)?;
    oracle_dict(py, &v)
}

/// Small-jump exponent of a tempered-stable measure; `None` when it fails.
#[pyfunction]
#[pyo3(signature = (scale, stability, lambda_pos, lambda_neg, rho_grid=None))]
fn tempered_stable_order_exponent(
    scale: f64,
    stability: f64,
    lambda_pos: f64,
    lambda_neg: f64,
    rho_grid: Option<Vec<f64>>,
) -> PyResult<Option<f64>> {
    let family = LevyFamily::TemperedStable { scale, stability, lambda_pos, lambda_neg };
    let levy = LevyMeasure::new(family, 0.05).map_err(to_py)?;
    let grid = rho_grid.unwrap_or_else(LevyMeasure::default_rho_grid);
    Ok(match levy.order_exponent_estimate(&grid).map_err(to_py)? {
        OrderExponent::Estimate(a) => Some(a),
        OrderExponent::Fails => None,
    })
}

#[pymodule]
fn levy_greeks_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", ARTIFACT_VERSION)?;
    m.add_function(wrap_pyfunction!(canonical_config, m)?)?;
    m.add_function(wrap_pyfunction!(config_sha256, m)?)?;
    m.add_function(wrap_pyfunction!(greeks, m)?)?;
    m.add_function(wrap_pyfunction!(price, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(black_scholes, m)?)?;
    m.add_function(wrap_pyfunction!(merton, m)?)?;
    m.add_function(wrap_pyfunction!(tempered_stable_order_exponent, m)?)?;
    Ok(())
}
