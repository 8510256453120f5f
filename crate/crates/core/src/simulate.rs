//! Piecewise-constant mean profiles, noise generators, and the Monte Carlo
//! rejection-rate engine.
//!
//! Every replicate draws from its own ChaCha8 stream keyed by
//! `(seed, replicate index)`, and per-replicate outcomes are merged in index
//! order, so a study gives bit-identical reports for any thread count.
//! The mean profile comes from stream 0 of the same seed: two configs that
//! share `seed`, `n`, `j`, `l_min` and `mean_range` share their profile.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, StudentT, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::chi_square_sf;
use crate::error::{Result, SipError};
use crate::estimators::check_order;
use crate::portmanteau::{
    sample_autocorrelations, segment_residuals, sip_test_from_lag_diffs, SipVariant,
};
use crate::quadform::{compute_lag_diffs, TimeSeries};

pub const REPORT_SCHEMA: &str = "sip-sim/1";
pub const AR_BURN_IN: usize = 1000;

/// RNG for replicate `index` (0-based) of a study seeded with `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

/// RNG reserved for the study's mean profile.
pub fn profile_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanProfile {
    pub theta: Vec<f64>,
    /// `τ_1 < .. < τ_J`, 1-based index of the last point in each segment but the final one.
    pub changepoints: Vec<usize>,
    pub segment_means: Vec<f64>,
    pub min_segment_length: usize,
}

impl MeanProfile {
    /// `W(θ) = Σ_j (μ_j - μ_{j+1})²`, including the wrap-around jump `μ_{J+1} → μ_1`.
    pub fn jump_energy(&self) -> f64 {
        let mu = &self.segment_means;
        if mu.len() < 2 {
            return 0.0;
        }
        let inner: f64 = mu.windows(2).map(|w| (w[0] - w[1]).powi(2)).sum();
        inner + (mu[mu.len() - 1] - mu[0]).powi(2)
    }

    /// `w = W(θ) / (n γ_0)`.
    pub fn normalized_jump_energy(&self, gamma0: f64) -> f64 {
        self.jump_energy() / (self.theta.len() as f64 * gamma0)
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }
}

/// Changepoints are uniform over all placements whose segments are at least
/// `l_min` long. Segment means are IID uniform on `range`, with a redraw when
/// two neighbours coincide.
pub fn generate_mean_profile<R: Rng + ?Sized>(
    n: usize,
    j: usize,
    l_min: usize,
    range: (f64, f64),
    rng: &mut R,
) -> Result<MeanProfile> {
    let (lo, hi) = range;
    if n == 0 || l_min == 0 {
        return Err(SipError::InfeasibleDesign(
            "n and l_min must be positive".into(),
        ));
    }
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(SipError::invalid(format!("bad mean range [{lo}, {hi}]")));
    }
    if (j + 1).saturating_mul(l_min) > n {
        return Err(SipError::InfeasibleDesign(format!(
            "{} segments of length >= {l_min} do not fit in n = {n}",
            j + 1
        )));
    }
    if j > 0 && lo == hi {
        return Err(SipError::InfeasibleDesign(
            "a degenerate mean range cannot produce distinct neighbouring means".into(),
        ));
    }

    // Stars and bars: J sorted slots among slack + J positions map one-to-one
    // onto segment-length vectors with every length >= l_min.
    let slack = n - (j + 1) * l_min;
    let mut slots = sample(rng, slack + j, j).into_vec();
    slots.sort_unstable();
    let changepoints: Vec<usize> = slots
        .iter()
        .enumerate()
        .map(|(k, &u)| u - k + (k + 1) * l_min)
        .collect();

    let dist = Uniform::new_inclusive(lo, hi).map_err(|e| SipError::invalid(e.to_string()))?;
    let mut segment_means: Vec<f64> = Vec::with_capacity(j + 1);
    for _ in 0..=j {
        let mut mu = dist.sample(rng);
        while segment_means.last() == Some(&mu) {
            mu = dist.sample(rng);
        }
        segment_means.push(mu);
    }

    let mut theta = Vec::with_capacity(n);
    let ends = changepoints.iter().copied().chain(std::iter::once(n));
    let mut start = 0;
    let mut min_len = n;
    for (mu, end) in segment_means.iter().zip(ends) {
        min_len = min_len.min(end - start);
        theta.extend(std::iter::repeat_n(*mu, end - start));
        start = end;
    }
    Ok(MeanProfile {
        theta,
        changepoints,
        segment_means,
        min_segment_length: min_len,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    IidGaussian,
    /// `√(2/3) · t_6`.
    IidT6Scaled,
    /// `Exp(1) - 1`.
    IidExpCentered,
    /// `z_i + Σ ω_j z_{i-j}` with standard normal `z`.
    Ma,
    /// `φ ε_{i-1} + z_i`.
    Ar1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ma_coeffs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ar_phi: Option<f64>,
}

impl NoiseSpec {
    pub fn iid(family: NoiseFamily) -> Self {
        Self {
            family,
            ma_coeffs: Vec::new(),
            ar_phi: None,
        }
    }

    pub fn ma(coeffs: Vec<f64>) -> Self {
        Self {
            family: NoiseFamily::Ma,
            ma_coeffs: coeffs,
            ar_phi: None,
        }
    }

    pub fn ar1(phi: f64) -> Self {
        Self {
            family: NoiseFamily::Ar1,
            ma_coeffs: Vec::new(),
            ar_phi: Some(phi),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            NoiseFamily::Ma => {
                if self.ma_coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(SipError::invalid("MA coefficients must be finite"));
                }
            }
            NoiseFamily::Ar1 => match self.ar_phi {
                Some(phi) if phi.is_finite() && phi.abs() < 1.0 => {}
                Some(phi) => {
                    return Err(SipError::invalid(format!(
                        "AR(1) coefficient must satisfy |phi| < 1, got {phi}"
                    )))
                }
                None => return Err(SipError::invalid("AR(1) noise needs ar_phi")),
            },
            _ => {}
        }
        Ok(())
    }

    /// True autocovariance at lag `h`.
    pub fn autocovariance(&self, h: usize) -> f64 {
        match self.family {
            NoiseFamily::IidGaussian | NoiseFamily::IidT6Scaled | NoiseFamily::IidExpCentered => {
                if h == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseFamily::Ma => {
                let psi = ma_weights(&self.ma_coeffs);
                if h >= psi.len() {
                    0.0
                } else {
                    psi.iter().zip(&psi[h..]).map(|(a, b)| a * b).sum()
                }
            }
            NoiseFamily::Ar1 => {
                let phi = self.ar_phi.unwrap_or(0.0);
                phi.powi(h as i32) / (1.0 - phi * phi)
            }
        }
    }

    pub fn variance(&self) -> f64 {
        self.autocovariance(0)
    }
}

fn ma_weights(omega: &[f64]) -> Vec<f64> {
    std::iter::once(1.0).chain(omega.iter().copied()).collect()
}

/// `ρ_h = Σ_j ω_j ω_{j+h} / Σ_j ω_j²` with `ω_0 = 1`, for `h = 1..=q`.
pub fn ma_autocorrelations(omega: &[f64]) -> Vec<f64> {
    let psi = ma_weights(omega);
    let g0: f64 = psi.iter().map(|v| v * v).sum();
    (1..psi.len())
        .map(|h| psi.iter().zip(&psi[h..]).map(|(a, b)| a * b).sum::<f64>() / g0)
        .collect()
}

pub fn generate_noise<R: Rng + ?Sized>(
    spec: &NoiseSpec,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let out = match spec.family {
        NoiseFamily::IidGaussian => (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect(),
        NoiseFamily::IidT6Scaled => {
            let t = StudentT::new(6.0).expect("valid degrees of freedom");
            let scale = (2.0f64 / 3.0).sqrt();
            (0..n).map(|_| scale * t.sample(rng)).collect()
        }
        NoiseFamily::IidExpCentered => (0..n).map(|_| rng.sample::<f64, _>(Exp1) - 1.0).collect(),
        NoiseFamily::Ma => {
            let q = spec.ma_coeffs.len();
            let z: Vec<f64> = (0..n + q)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            (0..n)
                .map(|i| {
                    let t = i + q;
                    spec.ma_coeffs
                        .iter()
                        .enumerate()
                        .fold(z[t], |acc, (j, w)| acc + w * z[t - j - 1])
                })
                .collect()
        }
        NoiseFamily::Ar1 => {
            let phi = spec.ar_phi.expect("validated");
            let mut e = rng.sample::<f64, _>(StandardNormal) / (1.0 - phi * phi).sqrt();
            for _ in 0..AR_BURN_IN {
                e = phi * e + rng.sample::<f64, _>(StandardNormal);
            }
            (0..n)
                .map(|_| {
                    e = phi * e + rng.sample::<f64, _>(StandardNormal);
                    e
                })
                .collect()
        }
    };
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sip1,
    Sip2,
    Box,
    Oracle,
    POracle,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sip1 => "sip1",
            Method::Sip2 => "sip2",
            Method::Box => "box",
            Method::Oracle => "oracle",
            Method::POracle => "p_oracle",
        }
    }

    fn variant(self) -> Option<SipVariant> {
        match self {
            Method::Sip1 => Some(SipVariant::Sip1),
            Method::Sip2 => Some(SipVariant::Sip2),
            _ => None,
        }
    }
}

fn default_methods() -> Vec<Method> {
    vec![
        Method::Sip1,
        Method::Sip2,
        Method::Box,
        Method::Oracle,
        Method::POracle,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    /// Number of changepoints.
    #[serde(alias = "J")]
    pub j: usize,
    #[serde(alias = "L_min")]
    pub l_min: usize,
    pub mean_range: [f64; 2],
    pub noise: NoiseSpec,
    pub reps: usize,
    pub m_list: Vec<usize>,
    pub alpha: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Use `2ŵ` in the SIP covariance.
    #[serde(default)]
    pub conservative: bool,
}

impl SimConfig {
    /// Parses the TOML config format.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text)
            .map_err(|e| SipError::invalid(format!("malformed simulation config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("SimConfig serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(SipError::invalid("reps must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(SipError::invalid(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.m_list.is_empty() {
            return Err(SipError::invalid("m_list must not be empty"));
        }
        for &m in &self.m_list {
            check_order(m, self.n)?;
        }
        if self.methods.is_empty() {
            return Err(SipError::invalid("methods must not be empty"));
        }
        let [lo, hi] = self.mean_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(SipError::invalid(format!("bad mean range [{lo}, {hi}]")));
        }
        self.noise.validate()
    }

    fn cells(&self) -> Vec<(Method, usize)> {
        let mut methods = self.methods.clone();
        methods.sort_unstable();
        methods.dedup();
        let mut ms = self.m_list.clone();
        ms.sort_unstable();
        ms.dedup();
        methods
            .iter()
            .flat_map(|&meth| ms.iter().map(move |&m| (meth, m)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub method: Method,
    pub m: usize,
    pub reps: usize,
    pub rejections: usize,
    /// Replicates where the test could not be computed; counted as non-rejections.
    pub degenerate: usize,
    pub rejection_rate: f64,
    pub mc_standard_error: f64,
    /// Mean raw `ŵ` over non-degenerate replicates (SIP rows only).
    pub mean_w_raw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub schema: String,
    pub config: SimConfig,
    pub min_segment_length: usize,
    /// `W(θ) / (n γ_0)` for the fixed profile and the noise's true variance.
    pub true_w: f64,
    pub rows: Vec<SimRow>,
    /// Not written to report files, which must be reproducible.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl SimReport {
    pub fn row(&self, method: Method, m: usize) -> Option<&SimRow> {
        self.rows.iter().find(|r| r.method == method && r.m == m)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "method,m,reps,rejections,degenerate,rejection_rate,mc_standard_error,mean_w_raw\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.method.as_str(),
                r.m,
                r.reps,
                r.rejections,
                r.degenerate,
                r.rejection_rate,
                r.mc_standard_error,
                r.mean_w_raw.map(|w| w.to_string()).unwrap_or_default()
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("SimReport serializes")
    }
}

#[derive(Debug, Clone, Copy)]
enum CellOutcome {
    Reject(Option<f64>),
    Accept(Option<f64>),
    Degenerate,
}

fn run_replicate(
    cfg: &SimConfig,
    profile: &MeanProfile,
    cells: &[(Method, usize)],
    index: u64,
) -> Result<Vec<CellOutcome>> {
    let mut rng = replicate_rng(cfg.seed, index);
    let noise = generate_noise(&cfg.noise, cfg.n, &mut rng)?;
    let x: Vec<f64> = profile
        .theta
        .iter()
        .zip(&noise)
        .map(|(t, e)| t + e)
        .collect();
    let max_m = cells.iter().map(|c| c.1).max().unwrap_or(1);
    let needs = |pred: fn(Method) -> bool| cells.iter().any(|c| pred(c.0));

    let stats = if needs(|m| m.variant().is_some()) {
        Some(compute_lag_diffs(&TimeSeries::new(x.clone())?, max_m + 2)?)
    } else {
        None
    };
    // Box–Pierce at every m reads prefixes of one autocorrelation vector.
    let acf_of = |v: &[f64], demean: bool| sample_autocorrelations(v, max_m, demean).ok();
    let box_r = if needs(|m| m == Method::Box) {
        acf_of(&x, true)
    } else {
        None
    };
    let oracle_r = if needs(|m| m == Method::Oracle) {
        acf_of(&noise, true)
    } else {
        None
    };
    let poracle_r = if needs(|m| m == Method::POracle) {
        acf_of(&segment_residuals(&x, &profile.changepoints)?, false)
    } else {
        None
    };

    let n = cfg.n as f64;
    let decide = |p: f64, w: Option<f64>| {
        if p < cfg.alpha {
            CellOutcome::Reject(w)
        } else {
            CellOutcome::Accept(w)
        }
    };
    cells
        .iter()
        .map(|&(method, m)| {
            let out = match method.variant() {
                Some(variant) => {
                    let stats = stats.as_ref().expect("computed for SIP cells");
                    match sip_test_from_lag_diffs(stats, m, variant, cfg.conservative) {
                        Ok(r) => decide(r.p_value, Some(r.w_raw)),
                        Err(SipError::DegenerateVariance { .. }) => CellOutcome::Degenerate,
                        Err(e) => return Err(e),
                    }
                }
                None => {
                    let r = match method {
                        Method::Box => &box_r,
                        Method::Oracle => &oracle_r,
                        _ => &poracle_r,
                    };
                    match r {
                        Some(r) => {
                            let q = n * r[..m].iter().map(|v| v * v).sum::<f64>();
                            decide(chi_square_sf(q, m)?, None)
                        }
                        None => CellOutcome::Degenerate,
                    }
                }
            };
            Ok(out)
        })
        .collect()
}

pub fn run_rejection_study(config: &SimConfig) -> Result<SimReport> {
    let start = Instant::now();
    config.validate()?;
    let profile = generate_mean_profile(
        config.n,
        config.j,
        config.l_min,
        (config.mean_range[0], config.mean_range[1]),
        &mut profile_rng(config.seed),
    )?;
    let cells = config.cells();
    let outcomes: Vec<Vec<CellOutcome>> = (0..config.reps as u64)
        .into_par_iter()
        .map(|r| run_replicate(config, &profile, &cells, r))
        .collect::<Result<_>>()?;

    let reps = config.reps;
    let rows = cells
        .iter()
        .enumerate()
        .map(|(c, &(method, m))| {
            let (mut rejections, mut degenerate, mut w_sum, mut w_count) = (0, 0, 0.0, 0usize);
            for rep in &outcomes {
                let w = match rep[c] {
                    CellOutcome::Reject(w) => {
                        rejections += 1;
                        w
                    }
                    CellOutcome::Accept(w) => w,
                    CellOutcome::Degenerate => {
                        degenerate += 1;
                        None
                    }
                };
                if let Some(w) = w {
                    w_sum += w;
                    w_count += 1;
                }
            }
            let p = rejections as f64 / reps as f64;
            SimRow {
                method,
                m,
                reps,
                rejections,
                degenerate,
                rejection_rate: p,
                mc_standard_error: (p * (1.0 - p) / reps as f64).sqrt(),
                mean_w_raw: (w_count > 0).then(|| w_sum / w_count as f64),
            }
        })
        .collect();

    Ok(SimReport {
        schema: REPORT_SCHEMA.to_string(),
        config: config.clone(),
        min_segment_length: profile.min_segment_length,
        true_w: profile.normalized_jump_energy(config.noise.variance()),
        rows,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Runs the study on a dedicated pool; `threads` affects wall time only.
pub fn run_rejection_study_with_threads(config: &SimConfig, threads: usize) -> Result<SimReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| SipError::invalid(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run_rejection_study(config))
}
