//! Shift-immune autocovariance estimates and the two jump-energy estimators.
//!
//! All estimators read a shared [`LagDiffStats`] holding `T_1..T_{m+2}`; the
//! `*_from_lag_diffs` entry points let callers scan a long trace once and
//! evaluate several orders `m` from the same statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SipError};
use crate::quadform::{compute_lag_diffs, LagDiffStats, TimeSeries};

/// Checks `m >= 1` and `m + 2 < n / 2`.
pub fn check_order(m: usize, n: usize) -> Result<()> {
    if m == 0 {
        return Err(SipError::invalid("lag order m must be at least 1"));
    }
    if 2 * (m + 2) >= n {
        return Err(SipError::invalid(format!(
            "lag order m = {m} too large for n = {n} (need m + 2 < n/2)"
        )));
    }
    Ok(())
}

fn check_stats(stats: &LagDiffStats, m: usize) -> Result<()> {
    check_order(m, stats.n())?;
    if stats.k_max() < m + 2 {
        return Err(SipError::invalid(format!(
            "order m = {m} needs T up to lag {}, only {} available",
            m + 2,
            stats.k_max()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcovEstimates {
    pub gamma0_hat: f64,
    pub gamma_hat: Vec<f64>,
    pub rho_hat: Vec<f64>,
    pub m: usize,
    pub n: usize,
}

/// `γ̂_0` and `γ̂_1..γ̂_m` without the positivity check on `γ̂_0`.
pub fn raw_autocovariances(stats: &LagDiffStats, m: usize) -> Result<(f64, Vec<f64>)> {
    check_stats(stats, m)?;
    let scale = 1.0 / (2.0 * stats.n() as f64);
    let t_m1 = stats.t(m + 1);
    let t_m2 = stats.t(m + 2);
    let gamma0 = scale * ((m + 2) as f64 * t_m1 - (m + 1) as f64 * t_m2);
    let gamma = (1..=m)
        .map(|h| scale * (-stats.t(h) + (m + 2 - h) as f64 * t_m1 - (m + 1 - h) as f64 * t_m2))
        .collect();
    Ok((gamma0, gamma))
}

impl AcovEstimates {
    pub fn from_lag_diffs(stats: &LagDiffStats, m: usize) -> Result<Self> {
        let (gamma0_hat, gamma_hat) = raw_autocovariances(stats, m)?;
        if gamma0_hat <= 0.0 || !gamma0_hat.is_finite() {
            return Err(SipError::degenerate(
                format!("gamma0_hat at order m = {m}"),
                gamma0_hat,
            ));
        }
        let rho_hat = gamma_hat.iter().map(|g| g / gamma0_hat).collect();
        Ok(Self {
            gamma0_hat,
            gamma_hat,
            rho_hat,
            m,
            n: stats.n(),
        })
    }
}

pub fn estimate_gamma(x: &TimeSeries, m: usize) -> Result<AcovEstimates> {
    check_order(m, x.len())?;
    let stats = compute_lag_diffs(x, m + 2)?;
    AcovEstimates::from_lag_diffs(&stats, m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WMethod {
    Difference,
    Eve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEnergyEstimate {
    /// Raw estimate; may be negative in finite samples.
    pub w_hat: f64,
    pub w_clamped: f64,
    pub method: WMethod,
    pub alpha_hat: Option<f64>,
    pub beta_hat: Option<f64>,
}

/// `ŵ_1 = (T_{m+2} - T_{m+1}) / (n γ̂_0)`.
pub fn w_diff_from_lag_diffs(
    stats: &LagDiffStats,
    m: usize,
    gamma0_hat: f64,
) -> Result<JumpEnergyEstimate> {
    check_stats(stats, m)?;
    if !gamma0_hat.is_finite() || gamma0_hat <= 0.0 {
        return Err(SipError::invalid(format!(
            "gamma0_hat must be positive and finite, got {gamma0_hat}"
        )));
    }
    let w_hat = (stats.t(m + 2) - stats.t(m + 1)) / (stats.n() as f64 * gamma0_hat);
    Ok(JumpEnergyEstimate {
        w_hat,
        w_clamped: w_hat.max(0.0),
        method: WMethod::Difference,
        alpha_hat: None,
        beta_hat: None,
    })
}

pub fn estimate_w_diff(x: &TimeSeries, m: usize, gamma0_hat: f64) -> Result<JumpEnergyEstimate> {
    check_order(m, x.len())?;
    let stats = compute_lag_diffs(x, m + 2)?;
    w_diff_from_lag_diffs(&stats, m, gamma0_hat)
}

/// Least squares of `T_h / (2n)` on `(1, h)` for `h = 1..=m+2`.
/// The intercept estimates `γ_0`, the slope `w γ_0 / 2`.
pub fn eve_from_lag_diffs(stats: &LagDiffStats, m: usize) -> Result<JumpEnergyEstimate> {
    check_stats(stats, m)?;
    let scale = 1.0 / (2.0 * stats.n() as f64);
    let y: Vec<f64> = (1..=m + 2).map(|h| stats.t(h) * scale).collect();
    let (alpha, beta) = fit_line(&y);
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(SipError::degenerate(
            format!("EVE intercept (alpha_hat) at order m = {m}"),
            alpha,
        ));
    }
    let w_hat = 2.0 * beta / alpha;
    Ok(JumpEnergyEstimate {
        w_hat,
        w_clamped: w_hat.max(0.0),
        method: WMethod::Eve,
        alpha_hat: Some(alpha),
        beta_hat: Some(beta),
    })
}

/// Intercept and slope of the least-squares line through `(h, y[h-1])`.
fn fit_line(y: &[f64]) -> (f64, f64) {
    let kf = y.len() as f64;
    let h_bar = (kf + 1.0) / 2.0;
    let sxx = kf * (kf * kf - 1.0) / 12.0;
    let y_bar = y.iter().sum::<f64>() / kf;
    let sxy: f64 = y
        .iter()
        .enumerate()
        .map(|(i, v)| ((i + 1) as f64 - h_bar) * v)
        .sum();
    let beta = sxy / sxx;
    (y_bar - beta * h_bar, beta)
}

pub fn eve_fit(x: &TimeSeries, m: usize) -> Result<JumpEnergyEstimate> {
    check_order(m, x.len())?;
    let stats = compute_lag_diffs(x, m + 2)?;
    eve_from_lag_diffs(&stats, m)
}
