//! SIP 1 / SIP 2 portmanteau tests and the Box–Pierce based baselines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::covariance::{build_sigma_rho, chi_square_sf, quadratic_statistic};
use crate::error::{Result, SipError};
use crate::estimators::{
    check_order, eve_from_lag_diffs, raw_autocovariances, w_diff_from_lag_diffs, AcovEstimates,
};
use crate::quadform::{compensated_sum, compute_lag_diffs, LagDiffStats, TimeSeries};

pub const DEFAULT_LAG: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SipVariant {
    /// `γ̂_0` from the two tail lags and `ŵ_1` from their difference.
    Sip1,
    /// EVE intercept for `γ_0` and `ŵ_2 = 2β̂/α̂`.
    #[default]
    Sip2,
}

impl fmt::Display for SipVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SipVariant::Sip1 => "sip1",
            SipVariant::Sip2 => "sip2",
        })
    }
}

impl FromStr for SipVariant {
    type Err = SipError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sip1" => Ok(SipVariant::Sip1),
            "sip2" => Ok(SipVariant::Sip2),
            other => Err(SipError::invalid(format!("unknown SIP variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SipTestResult {
    pub variant: SipVariant,
    pub conservative: bool,
    pub m: usize,
    pub n: usize,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub gamma0_used: f64,
    pub w_raw: f64,
    pub w_used: f64,
    pub rho_hat: Vec<f64>,
}

/// Runs SIP on precomputed lag statistics (`k_max >= m + 2`).
pub fn sip_test_from_lag_diffs(
    stats: &LagDiffStats,
    m: usize,
    variant: SipVariant,
    conservative: bool,
) -> Result<SipTestResult> {
    let (gamma0_used, w) = match variant {
        SipVariant::Sip1 => {
            let est = AcovEstimates::from_lag_diffs(stats, m)?;
            let w = w_diff_from_lag_diffs(stats, m, est.gamma0_hat)?;
            (est.gamma0_hat, w)
        }
        SipVariant::Sip2 => {
            let w = eve_from_lag_diffs(stats, m)?;
            (w.alpha_hat.expect("EVE always reports alpha"), w)
        }
    };
    let (_, gamma_hat) = raw_autocovariances(stats, m)?;
    let rho_hat: Vec<f64> = gamma_hat.iter().map(|g| g / gamma0_used).collect();

    let w_used = if conservative {
        2.0 * w.w_clamped
    } else {
        w.w_clamped
    };
    let sigma = build_sigma_rho(m, w_used)?;
    let statistic = quadratic_statistic(&rho_hat, &sigma, stats.n())?;
    let p_value = chi_square_sf(statistic, m)?;
    Ok(SipTestResult {
        variant,
        conservative,
        m,
        n: stats.n(),
        statistic,
        df: m,
        p_value,
        gamma0_used,
        w_raw: w.w_hat,
        w_used,
        rho_hat,
    })
}

pub fn sip_test(
    x: &TimeSeries,
    m: usize,
    variant: SipVariant,
    conservative: bool,
) -> Result<SipTestResult> {
    check_order(m, x.len())?;
    let stats = compute_lag_diffs(x, m + 2)?;
    sip_test_from_lag_diffs(&stats, m, variant, conservative)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Box,
    Oracle,
    POracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub method: BaselineMethod,
    pub m: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// Linear (non-circular) sample autocorrelations `r_1..r_m` with 1/n scaling.
pub fn sample_autocorrelations(x: &[f64], m: usize, demean: bool) -> Result<Vec<f64>> {
    let n = x.len();
    if m == 0 || m >= n {
        return Err(SipError::invalid(format!(
            "lag count must satisfy 1 <= m < n (m = {m}, n = {n})"
        )));
    }
    let mean = if demean {
        compensated_sum(x.iter().copied()) / n as f64
    } else {
        0.0
    };
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0 = compensated_sum(c.iter().map(|v| v * v));
    if c0.is_nan() || c0 <= 0.0 {
        return Err(SipError::degenerate("sample variance", c0 / n as f64));
    }
    Ok((1..=m)
        .map(|h| compensated_sum(c[..n - h].iter().zip(&c[h..]).map(|(a, b)| a * b)) / c0)
        .collect())
}

fn box_pierce_raw(
    x: &[f64],
    m: usize,
    demean: bool,
    method: BaselineMethod,
) -> Result<BaselineResult> {
    let r = sample_autocorrelations(x, m, demean)?;
    let statistic = x.len() as f64 * r.iter().map(|v| v * v).sum::<f64>();
    Ok(BaselineResult {
        method,
        m,
        statistic,
        p_value: chi_square_sf(statistic, m)?,
    })
}

/// `Q = n Σ r_h²` against χ²_m.
pub fn box_pierce(x: &TimeSeries, m: usize, demean: bool) -> Result<BaselineResult> {
    box_pierce_raw(x.values(), m, demean, BaselineMethod::Box)
}

/// Box–Pierce on the true noise sequence (simulation only).
pub fn oracle_test(noise: &TimeSeries, m: usize) -> Result<BaselineResult> {
    box_pierce_raw(noise.values(), m, true, BaselineMethod::Oracle)
}

/// Subtracts segment means; `changepoints` are 1-based ends of all but the last segment.
pub fn segment_residuals(x: &[f64], changepoints: &[usize]) -> Result<Vec<f64>> {
    let n = x.len();
    let mut prev = 0;
    for &tau in changepoints {
        if tau <= prev || tau >= n {
            return Err(SipError::invalid(format!(
                "changepoints must be strictly increasing within [1, {n}); got {tau} after {prev}"
            )));
        }
        prev = tau;
    }
    if changepoints.len() + 1 == n {
        return Err(SipError::invalid(
            "every segment has length one; residuals would vanish identically",
        ));
    }
    let mut out = Vec::with_capacity(n);
    let bounds = std::iter::once(0)
        .chain(changepoints.iter().copied())
        .zip(changepoints.iter().copied().chain(std::iter::once(n)));
    for (start, end) in bounds {
        let seg = &x[start..end];
        let mean = compensated_sum(seg.iter().copied()) / seg.len() as f64;
        out.extend(seg.iter().map(|v| v - mean));
    }
    Ok(out)
}

/// Box–Pierce on residuals from segment-wise sample means at known changepoints.
pub fn pseudo_oracle_test(
    x: &TimeSeries,
    changepoints: &[usize],
    m: usize,
) -> Result<BaselineResult> {
    let resid = segment_residuals(x.values(), changepoints)?;
    box_pierce_raw(&resid, m, false, BaselineMethod::POracle)
}
