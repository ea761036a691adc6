//! Python bindings for `mmwave-core`.
//!
//! Complex vectors cross the boundary as lists of Python `complex`; matrices
//! as lists of columns.

use std::collections::BTreeMap;
use std::path::PathBuf;

use mmwave_core::array::{build_angle_grid, ula_response as core_ula_response, UlaSpec};
use mmwave_core::config::parse_config_with_overrides;
use mmwave_core::harness::{self, run_campaign, CampaignStats, ScenarioConfig};
use mmwave_core::linalg::CVector;
use mmwave_core::output::emit_results;
use mmwave_core::pastd::{PastdState, DEFAULT_EPS_GUARD};
use mmwave_core::Error;
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::Config { .. } | Error::NonFinite(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// One row per rate series, keyed like `"dl/hybrid/zf"`.
fn series_rows(stats: &CampaignStats) -> Vec<(String, f64, f64, usize)> {
    stats
        .series
        .iter()
        .map(|(k, s)| {
            (
                format!("{}/{}/{}", k.link.as_str(), k.bf_mode.as_str(), k.estimator.as_str()),
                s.median,
                s.p90,
                s.n_samples,
            )
        })
        .collect()
}

/// Unit-norm ULA response at angle `theta` (radians from broadside).
#[pyfunction]
#[pyo3(signature = (n, theta, spacing = 0.5))]
fn ula_response(n: usize, theta: f64, spacing: f64) -> PyResult<Vec<Complex64>> {
    let spec = UlaSpec::new(n, spacing).map_err(to_py_err)?;
    Ok(core_ula_response(&spec, theta).map_err(to_py_err)?.iter().copied().collect())
}

#[pyfunction]
fn angle_grid(n_rf: usize) -> PyResult<Vec<f64>> {
    build_angle_grid(n_rf).map_err(to_py_err)
}

/// Thermal noise power in watts.
#[pyfunction]
fn noise_variance(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    harness::noise_variance(bandwidth_hz, noise_figure_db)
}

/// Nearest-rank percentile, `p` in (0, 1].
#[pyfunction]
fn percentile(values: Vec<f64>, p: f64) -> PyResult<f64> {
    harness::percentile(&values, p).map_err(to_py_err)
}

/// Sorted `(value, i/n)` pairs.
#[pyfunction]
fn empirical_cdf(values: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    harness::empirical_cdf(&values).map_err(to_py_err)
}

/// Streaming PASTd tracker of the dominant subspace.
#[pyclass(name = "Pastd")]
struct PyPastd {
    inner: PastdState,
}

#[pymethods]
impl PyPastd {
    #[new]
    #[pyo3(signature = (order, dim, beta = 1.0, eps_guard = DEFAULT_EPS_GUARD))]
    fn new(order: usize, dim: usize, beta: f64, eps_guard: f64) -> PyResult<Self> {
        Ok(Self { inner: PastdState::new(order, dim, beta, eps_guard).map_err(to_py_err)? })
    }

    /// Feed one snapshot; returns the deflated residual.
    fn update(&mut self, r: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        let x = self.inner.update(&CVector::from_vec(r)).map_err(to_py_err)?;
        Ok(x.iter().copied().collect())
    }

    /// Column-normalized tracked vectors, one list per column.
    fn basis(&self) -> PyResult<Vec<Vec<Complex64>>> {
        let b = self.inner.extract_basis().map_err(to_py_err)?;
        Ok(b.column_iter().map(|c| c.iter().copied().collect()).collect())
    }

    #[getter]
    fn lambdas(&self) -> Vec<f64> {
        self.inner.lambdas().to_vec()
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }
}

/// A validated scenario, parsed from `key = value` text plus overrides.
#[pyclass(name = "Scenario")]
struct PyScenario {
    cfg: ScenarioConfig,
}

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (text = "", overrides = None))]
    fn new(text: &str, overrides: Option<Vec<String>>) -> PyResult<Self> {
        let cfg = parse_config_with_overrides(text, &overrides.unwrap_or_default()).map_err(to_py_err)?;
        Ok(Self { cfg })
    }

    #[getter]
    fn n_users(&self) -> usize {
        self.cfg.n_users
    }

    #[getter]
    fn n_trials(&self) -> usize {
        self.cfg.n_trials
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.cfg.master_seed
    }

    #[getter]
    fn noise_var(&self) -> f64 {
        self.cfg.noise_var()
    }

    /// Run the campaign. Returns `{series: {"median", "p90", "n_samples"}}`
    /// keyed like `"dl/hybrid/zf"`; writes the CSV files when `out_prefix`
    /// is given. Raises if any trial fails.
    #[pyo3(signature = (out_prefix = None))]
    fn run(
        &self,
        py: Python<'_>,
        out_prefix: Option<PathBuf>,
    ) -> PyResult<BTreeMap<String, BTreeMap<String, f64>>> {
        let cfg = self.cfg.clone();
        let campaign = py.detach(move || run_campaign(&cfg)).map_err(to_py_err)?;
        if let Some(prefix) = out_prefix {
            emit_results(&campaign, &prefix).map_err(to_py_err)?;
        }
        Ok(series_rows(&campaign.stats)
            .into_iter()
            .map(|(name, median, p90, n)| {
                let fields = [("median", median), ("p90", p90), ("n_samples", n as f64)];
                (name, fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
            })
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(k={}, n_bs={}, n_ms={}, m={}, trials={}, seed={})",
            self.cfg.n_users, self.cfg.n_bs, self.cfg.n_ms, self.cfg.order, self.cfg.n_trials, self.cfg.master_seed
        )
    }
}

#[pymodule]
fn mmwave(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(ula_response, m)?)?;
    m.add_function(wrap_pyfunction!(angle_grid, m)?)?;
    m.add_function(wrap_pyfunction!(noise_variance, m)?)?;
    m.add_function(wrap_pyfunction!(percentile, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_cdf, m)?)?;
    m.add_class::<PyPastd>()?;
    m.add_class::<PyScenario>()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmwave_core::harness::Campaign;

    #[test]
    fn series_rows_follow_csv_labels() {
        let cfg = ScenarioConfig { n_trials: 3, n_users: 2, workers: 1, ..Default::default() };
        let Campaign { stats, .. } = run_campaign(&cfg).unwrap();
        let names: Vec<String> = series_rows(&stats).into_iter().map(|s| s.0).collect();
        assert!(names.contains(&"dl/hybrid/zf".to_string()), "{names:?}");
        assert!(names.contains(&"ul/hybrid/perfect".to_string()), "{names:?}");
        assert_eq!(names.len(), 6);
    }
}
