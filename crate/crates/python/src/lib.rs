//! Python bindings for the shift-immune portmanteau library.
//!
//! Series are passed as sequences of floats. Library errors map onto
//! `ValueError` (invalid arguments), `DegenerateVarianceError`,
//! `InfeasibleDesignError` and `ArithmeticError` (non positive-definite
//! covariance, which signals a bug).

use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use sip_core::{acf, portmanteau, simulate, SipError, TimeSeries};

create_exception!(sip_portmanteau, DegenerateVarianceError, PyValueError);
create_exception!(sip_portmanteau, InfeasibleDesignError, PyValueError);

fn to_py(err: SipError) -> PyErr {
    match err {
        SipError::InvalidArgument(_) => PyValueError::new_err(err.to_string()),
        SipError::DegenerateVariance { .. } => DegenerateVarianceError::new_err(err.to_string()),
        SipError::InfeasibleDesign(_) => InfeasibleDesignError::new_err(err.to_string()),
        SipError::NotPositiveDefinite { .. } => PyArithmeticError::new_err(err.to_string()),
    }
}

fn series(values: Vec<f64>) -> PyResult<TimeSeries> {
    TimeSeries::new(values).map_err(to_py)
}

#[pyclass(frozen, get_all, skip_from_py_object, name = "SipTestResult")]
#[derive(Clone)]
pub struct PySipTestResult {
    variant: String,
    conservative: bool,
    m: usize,
    n: usize,
    statistic: f64,
    df: usize,
    p_value: f64,
    gamma0_used: f64,
    w_raw: f64,
    w_used: f64,
    rho_hat: Vec<f64>,
}

impl From<portmanteau::SipTestResult> for PySipTestResult {
    fn from(r: portmanteau::SipTestResult) -> Self {
        Self {
            variant: r.variant.to_string(),
            conservative: r.conservative,
            m: r.m,
            n: r.n,
            statistic: r.statistic,
            df: r.df,
            p_value: r.p_value,
            gamma0_used: r.gamma0_used,
            w_raw: r.w_raw,
            w_used: r.w_used,
            rho_hat: r.rho_hat,
        }
    }
}

#[pymethods]
impl PySipTestResult {
    fn __repr__(&self) -> String {
        format!(
            "SipTestResult(variant={:?}, m={}, statistic={}, p_value={}, w_used={})",
            self.variant, self.m, self.statistic, self.p_value, self.w_used
        )
    }
}

#[pyclass(frozen, get_all, skip_from_py_object, name = "BaselineResult")]
#[derive(Clone)]
pub struct PyBaselineResult {
    method: String,
    m: usize,
    statistic: f64,
    p_value: f64,
}

impl From<portmanteau::BaselineResult> for PyBaselineResult {
    fn from(r: portmanteau::BaselineResult) -> Self {
        let method = match r.method {
            portmanteau::BaselineMethod::Box => "box",
            portmanteau::BaselineMethod::Oracle => "oracle",
            portmanteau::BaselineMethod::POracle => "p_oracle",
        };
        Self {
            method: method.to_string(),
            m: r.m,
            statistic: r.statistic,
            p_value: r.p_value,
        }
    }
}

#[pymethods]
impl PyBaselineResult {
    fn __repr__(&self) -> String {
        format!(
            "BaselineResult(method={:?}, m={}, statistic={}, p_value={})",
            self.method, self.m, self.statistic, self.p_value
        )
    }
}

#[pyclass(frozen, name = "AcfData")]
pub struct PyAcfData {
    inner: acf::AcfData,
}

#[pymethods]
impl PyAcfData {
    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.kind {
            acf::AcfKind::ShiftImmune => "shift_immune",
            acf::AcfKind::Classical => "classical",
        }
    }

    #[getter]
    fn max_lag(&self) -> usize {
        self.inner.max_lag
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    #[getter]
    fn bound(&self) -> f64 {
        self.inner.bound
    }

    #[getter]
    fn w_hat_used(&self) -> Option<f64> {
        self.inner.w_hat_used
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    /// Render as "csv", "json" or "svg".
    fn render(&self, format: &str) -> PyResult<String> {
        let fmt: acf::AcfFormat = format.parse().map_err(to_py)?;
        let mut buf = Vec::new();
        acf::emit_acf(&self.inner, fmt, &mut buf)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(String::from_utf8(buf).expect("emitters write utf-8"))
    }

    fn __repr__(&self) -> String {
        format!(
            "AcfData(kind={:?}, max_lag={}, bound={})",
            self.kind(),
            self.inner.max_lag,
            self.inner.bound
        )
    }
}

/// Circular lag-difference sums T_1..T_k_max.
#[pyfunction]
fn lag_diffs(x: Vec<f64>, k_max: usize) -> PyResult<Vec<f64>> {
    let stats = sip_core::compute_lag_diffs(&series(x)?, k_max).map_err(to_py)?;
    Ok(stats.as_slice().to_vec())
}

/// Returns (gamma0_hat, gamma_hat, rho_hat) at order m.
#[pyfunction]
fn estimate_gamma(x: Vec<f64>, m: usize) -> PyResult<(f64, Vec<f64>, Vec<f64>)> {
    let est = sip_core::estimate_gamma(&series(x)?, m).map_err(to_py)?;
    Ok((est.gamma0_hat, est.gamma_hat, est.rho_hat))
}

/// Difference-based jump-energy estimate; returns (w_hat, w_clamped).
#[pyfunction]
fn estimate_w_diff(x: Vec<f64>, m: usize, gamma0_hat: f64) -> PyResult<(f64, f64)> {
    let w = sip_core::estimate_w_diff(&series(x)?, m, gamma0_hat).map_err(to_py)?;
    Ok((w.w_hat, w.w_clamped))
}

/// EVE regression; returns (alpha_hat, beta_hat, w_hat).
#[pyfunction]
fn eve_fit(x: Vec<f64>, m: usize) -> PyResult<(f64, f64, f64)> {
    let w = sip_core::eve_fit(&series(x)?, m).map_err(to_py)?;
    Ok((
        w.alpha_hat.unwrap_or(f64::NAN),
        w.beta_hat.unwrap_or(f64::NAN),
        w.w_hat,
    ))
}

#[pyfunction]
fn build_sigma_rho(m: usize, w: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(sip_core::build_sigma_rho(m, w).map_err(to_py)?.to_rows())
}

#[pyfunction]
fn chi_square_sf(x: f64, df: usize) -> PyResult<f64> {
    sip_core::chi_square_sf(x, df).map_err(to_py)
}

#[pyfunction]
fn project_onto_shift_immune(v: Vec<f64>) -> PyResult<Vec<f64>> {
    sip_core::project_onto_shift_immune(&v).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (x, m = 4, variant = "sip2", conservative = false))]
fn sip_test(x: Vec<f64>, m: usize, variant: &str, conservative: bool) -> PyResult<PySipTestResult> {
    let variant: portmanteau::SipVariant = variant.parse().map_err(to_py)?;
    let r = sip_core::sip_test(&series(x)?, m, variant, conservative).map_err(to_py)?;
    Ok(r.into())
}

#[pyfunction]
#[pyo3(signature = (x, m, demean = true))]
fn box_pierce(x: Vec<f64>, m: usize, demean: bool) -> PyResult<PyBaselineResult> {
    Ok(sip_core::box_pierce(&series(x)?, m, demean)
        .map_err(to_py)?
        .into())
}

#[pyfunction]
fn pseudo_oracle_test(
    x: Vec<f64>,
    changepoints: Vec<usize>,
    m: usize,
) -> PyResult<PyBaselineResult> {
    Ok(sip_core::pseudo_oracle_test(&series(x)?, &changepoints, m)
        .map_err(to_py)?
        .into())
}

#[pyfunction]
fn shift_immune_acf(x: Vec<f64>, max_lag: usize) -> PyResult<PyAcfData> {
    let inner = sip_core::shift_immune_acf(&series(x)?, max_lag).map_err(to_py)?;
    Ok(PyAcfData { inner })
}

#[pyfunction]
fn classical_acf(x: Vec<f64>, max_lag: usize) -> PyResult<PyAcfData> {
    let inner = sip_core::classical_acf(&series(x)?, max_lag).map_err(to_py)?;
    Ok(PyAcfData { inner })
}

#[pyfunction]
fn ma_autocorrelations(omega: Vec<f64>) -> Vec<f64> {
    sip_core::ma_autocorrelations(&omega)
}

/// Runs a rejection-rate study described by a TOML config; returns the JSON report.
#[pyfunction]
#[pyo3(signature = (config_toml, threads = 1))]
fn run_study(py: Python<'_>, config_toml: &str, threads: usize) -> PyResult<String> {
    let cfg = simulate::SimConfig::from_toml(config_toml).map_err(to_py)?;
    let report = py
        .detach(|| simulate::run_rejection_study_with_threads(&cfg, threads))
        .map_err(to_py)?;
    Ok(report.to_json())
}

#[pymodule]
fn sip_portmanteau(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add(
        "DegenerateVarianceError",
        m.py().get_type::<DegenerateVarianceError>(),
    )?;
    m.add(
        "InfeasibleDesignError",
        m.py().get_type::<InfeasibleDesignError>(),
    )?;
    m.add_class::<PySipTestResult>()?;
    m.add_class::<PyBaselineResult>()?;
    m.add_class::<PyAcfData>()?;
    m.add_function(wrap_pyfunction!(lag_diffs, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_w_diff, m)?)?;
    m.add_function(wrap_pyfunction!(eve_fit, m)?)?;
    m.add_function(wrap_pyfunction!(build_sigma_rho, m)?)?;
    m.add_function(wrap_pyfunction!(chi_square_sf, m)?)?;
    m.add_function(wrap_pyfunction!(project_onto_shift_immune, m)?)?;
    m.add_function(wrap_pyfunction!(sip_test, m)?)?;
    m.add_function(wrap_pyfunction!(box_pierce, m)?)?;
    m.add_function(wrap_pyfunction!(pseudo_oracle_test, m)?)?;
    m.add_function(wrap_pyfunction!(shift_immune_acf, m)?)?;
    m.add_function(wrap_pyfunction!(classical_acf, m)?)?;
    m.add_function(wrap_pyfunction!(ma_autocorrelations, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    Ok(())
}
