//! Python bindings: stable parameters, closed forms, path samplers and the
//! identity suite.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use csbp_core::closed_forms as cf;
use csbp_core::conditioned::{self, HKind};
use csbp_core::lamperti;
use csbp_core::mc::map_paths;
use csbp_core::rng::derive_seed;
use csbp_core::special_functions as sf;
use csbp_core::stable_levy::{self as sl, StepRule, Stopping};
use csbp_core::verify::{self, ks};
use csbp_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) | Error::Range(_) | Error::UnknownIdentity(_) | Error::UnknownFormula { .. } | Error::Config(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Laplace exponent `psi(lambda) = c_plus lambda^alpha` of a spectrally positive stable process.
#[pyclass(name = "StableParams", frozen)]
#[derive(Clone)]
struct PyStableParams {
    inner: sl::StableParams,
}

#[pymethods]
impl PyStableParams {
    #[new]
    #[pyo3(signature = (alpha, c_plus = 1.0))]
    fn new(alpha: f64, c_plus: f64) -> PyResult<Self> {
        Ok(Self { inner: sl::StableParams::new(alpha, c_plus).map_err(to_py)? })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn c_plus(&self) -> f64 {
        self.inner.c_plus
    }

    fn psi(&self, lambda: f64) -> PyResult<f64> {
        sl::psi(&self.inner, lambda).map_err(to_py)
    }

    fn phi_inverse(&self, q: f64) -> PyResult<f64> {
        sl::phi_inverse(&self.inner, q).map_err(to_py)
    }

    fn u_t(&self, t: f64, lambda: f64) -> PyResult<f64> {
        cf::u_t(&self.inner, t, lambda).map_err(to_py)
    }

    fn cb_laplace(&self, x: f64, t: f64, lambda: f64) -> PyResult<f64> {
        cf::cb_laplace(&self.inner, x, t, lambda).map_err(to_py)
    }

    fn extinction_cdf(&self, x: f64, t: f64) -> PyResult<f64> {
        cf::extinction_cdf(&self.inner, x, t).map_err(to_py)
    }

    fn scale_w(&self, q: f64, x: f64) -> PyResult<f64> {
        sf::scale_w(&self.inner, q, x).map_err(to_py)
    }

    fn scale_z(&self, q: f64, x: f64) -> PyResult<f64> {
        sf::scale_z(&self.inner, q, x).map_err(to_py)
    }

    /// Two-sided exit with progeny discount; `branch` is `"i"` (up first) or `"ii"` (extinct first).
    fn thm2_exit(&self, x: f64, a: f64, q: f64, branch: &str) -> PyResult<f64> {
        let b = match branch {
            "i" => cf::ExitBranch::UpFirst,
            "ii" => cf::ExitBranch::ExtinctFirst,
            _ => return Err(PyValueError::new_err(format!("branch must be \"i\" or \"ii\", got {branch:?}"))),
        };
        cf::thm2_exit(&self.inner, x, a, q, b).map_err(to_py)
    }

    fn cbi_exact_laplace(&self, x: f64, t: f64, lambda: f64) -> PyResult<f64> {
        cf::cbi_exact_laplace(&self.inner, x, t, lambda).map_err(to_py)
    }

    fn cbi_entrance_laplace(&self, t: f64, lambda: f64) -> PyResult<f64> {
        cf::cbi_entrance_laplace(&self.inner, t, lambda).map_err(to_py)
    }

    fn qs_limit(&self, lambda: f64) -> PyResult<f64> {
        cf::qs_limit(&self.inner, lambda).map_err(to_py)
    }

    fn canonical_m(&self) -> f64 {
        cf::canonical_m(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("StableParams(alpha={}, c_plus={})", self.inner.alpha, self.inner.c_plus)
    }
}

/// `E_alpha(x)`.
#[pyfunction]
fn mittag_leffler(alpha: f64, x: f64) -> PyResult<f64> {
    Ok(sf::mittag_leffler(alpha, x).map_err(to_py)?.value)
}

/// One sampled path: times, values and whether it was absorbed at 0.
type PyPath = (Vec<f64>, Vec<f64>, bool);

/// Stable paths on the fixed grid `k dt`.
#[pyfunction]
#[pyo3(signature = (params, x0, horizon, dt, n_paths, seed = 1))]
fn simulate_stable(params: &PyStableParams, x0: f64, horizon: f64, dt: f64, n_paths: usize, seed: u64) -> PyResult<Vec<PyPath>> {
    let p = params.inner;
    map_paths(n_paths, derive_seed(seed, "python-stable"), |_, rng| {
        let path = sl::simulate_path(&p, x0, horizon, dt, rng)?;
        Ok((path.times, path.values, false))
    })
    .map_err(to_py)
}

/// CB paths from `x0` up to clock `horizon`, on a uniform grid of step `dt`.
#[pyfunction]
#[pyo3(signature = (params, x0, horizon, dt, n_paths, seed = 1, eps = verify::DEFAULT_EPS))]
fn simulate_cb(params: &PyStableParams, x0: f64, horizon: f64, dt: f64, n_paths: usize, seed: u64, eps: f64) -> PyResult<Vec<PyPath>> {
    let p = params.inner;
    let rule = StepRule::adaptive(eps, verify::DEFAULT_DT_MIN, dt);
    let stop = Stopping { clock_horizon: Some(horizon), ..Stopping::default() };
    map_paths(n_paths, derive_seed(seed, "python-cb"), |_, rng| {
        let (tc, _) = lamperti::simulate_cb(&p, x0, &rule, &stop, rng)?;
        let absorbed = tc.absorbed.is_some_and(|a| a <= horizon);
        let out = match tc.output.truncated(horizon) {
            Some(path) if !absorbed => path,
            _ => tc.output.clone(),
        };
        let grid = lamperti::resample(&out, dt)?;
        Ok((grid.times, grid.values, absorbed))
    })
    .map_err(to_py)
}

/// Extinction times of CB paths from `x0`; `inf` when later than `censor`.
#[pyfunction]
#[pyo3(signature = (params, x0, n_paths, seed = 1, censor = 1e4, eps = verify::DEFAULT_EPS))]
fn extinction_times(params: &PyStableParams, x0: f64, n_paths: usize, seed: u64, censor: f64, eps: f64) -> PyResult<Vec<f64>> {
    let p = params.inner;
    let rule = StepRule::adaptive(eps, verify::DEFAULT_DT_MIN, f64::INFINITY);
    let stop = Stopping { clock_horizon: Some(censor), ..Stopping::default() };
    map_paths(n_paths, derive_seed(seed, "python-extinction"), |_, rng| {
        let (tc, _) = lamperti::simulate_cb(&p, x0, &rule, &stop, rng)?;
        Ok(tc.absorbed.unwrap_or(f64::INFINITY))
    })
    .map_err(to_py)
}

/// h-transform estimate of `E^up[exp(-lambda V_horizon)]` for `kind` in
/// `sp_positive`, `sn_dual`, `cb`; returns `(mean, stderr, ess)`.
#[pyfunction]
#[pyo3(signature = (kind, params, x, horizon, lam, n_paths, seed = 1))]
fn h_transform_laplace(kind: &str, params: &PyStableParams, x: f64, horizon: f64, lam: f64, n_paths: usize, seed: u64) -> PyResult<(f64, f64, f64)> {
    let kind = match kind {
        "sp_positive" => HKind::SpPositive,
        "sn_dual" => HKind::SnDual,
        "cb" => HKind::Cb,
        _ => return Err(PyValueError::new_err(format!("unknown kind {kind:?}"))),
    };
    let rule = StepRule::adaptive(verify::DEFAULT_EPS, verify::DEFAULT_DT_MIN, f64::INFINITY);
    let f = move |path: &sl::Path| (-lam * path.last_value()).exp();
    let e = conditioned::h_transform_estimate(kind, &params.inner, x, horizon, &f, &[], n_paths, &rule, seed).map_err(to_py)?;
    Ok((e.estimate.mean, e.estimate.stderr, e.ess))
}

/// Two-sample Kolmogorov-Smirnov test; returns `(statistic, p_value)`.
#[pyfunction]
fn ks_two_sample(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = ks::ks_two_sample(&a, &b).map_err(to_py)?;
    Ok((r.statistic, r.p_value))
}

/// Names of the registered identities.
#[pyfunction]
fn identities() -> Vec<&'static str> {
    verify::registry().iter().map(|e| e.name).collect()
}

/// Run one identity; returns the check as a JSON string.
#[pyfunction]
#[pyo3(signature = (name, params = None, n_paths = 10_000, seed = 1))]
fn run_identity(name: &str, params: Option<BTreeMap<String, f64>>, n_paths: usize, seed: u64) -> PyResult<String> {
    let check = verify::run_identity(name, &params.unwrap_or_default(), n_paths, seed).map_err(to_py)?;
    serde_json::to_string(&check).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Run a suite from a JSON config string (same schema as `csbp verify --config`);
/// returns the report as a JSON string.
#[pyfunction]
fn run_suite(config_json: &str) -> PyResult<String> {
    let cfg = csbp_core::cli::RunConfig::from_json(config_json).map_err(to_py)?;
    cfg.run().and_then(|r| r.to_json()).map_err(to_py)
}

#[pymodule]
fn csbp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStableParams>()?;
    m.add_function(wrap_pyfunction!(mittag_leffler, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_stable, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_cb, m)?)?;
    m.add_function(wrap_pyfunction!(extinction_times, m)?)?;
    m.add_function(wrap_pyfunction!(h_transform_laplace, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    m.add_function(wrap_pyfunction!(identities, m)?)?;
    m.add_function(wrap_pyfunction!(run_identity, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    Ok(())
}
