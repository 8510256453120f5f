//! Asymptotic covariance of the shift-immune autocorrelations, the quadratic
//! SIP statistic, and the χ² upper tail used for p-values.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SipError};

/// `Σ_{ρ,w}` for order `m`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaRho {
    m: usize,
    w: f64,
    matrix: Vec<f64>,
}

impl SigmaRho {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    /// Entry at 1-based `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i - 1) * self.m + (j - 1)]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.matrix
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.matrix.chunks(self.m).map(<[f64]>::to_vec).collect()
    }

    /// Lower Cholesky factor, row-major. No jitter is ever added.
    pub fn cholesky(&self) -> Result<Vec<f64>> {
        cholesky(&self.matrix, self.m)
    }
}

/// `I + c₁·11' − c₂·(η1' + 1η') + (2 + 2w)·ηη' + 2w·H` with
/// `c₁ = (2m²+6m+5) + 2(m²+3m+2)w`, `c₂ = (2m+3) + 2(m+2)w`, `η = (1..m)`, `H_ij = min(i, j)`.
pub fn build_sigma_rho(m: usize, w: f64) -> Result<SigmaRho> {
    if m == 0 {
        return Err(SipError::invalid("order m must be at least 1"));
    }
    if !w.is_finite() || w < 0.0 {
        return Err(SipError::invalid(format!(
            "w must be finite and nonnegative (clamp upstream), got {w}"
        )));
    }
    let mf = m as f64;
    let c_ones = (2.0 * mf * mf + 6.0 * mf + 5.0) + 2.0 * (mf * mf + 3.0 * mf + 2.0) * w;
    let c_cross = (2.0 * mf + 3.0) + 2.0 * (mf + 2.0) * w;
    let c_eta = 2.0 + 2.0 * w;
    let mut matrix = vec![0.0; m * m];
    for i in 1..=m {
        for j in 1..=m {
            let (fi, fj) = (i as f64, j as f64);
            let mut v = c_ones - c_cross * (fi + fj) + c_eta * fi * fj + 2.0 * w * fi.min(fj);
            if i == j {
                v += 1.0;
            }
            matrix[(i - 1) * m + (j - 1)] = v;
        }
    }
    Ok(SigmaRho { m, w, matrix })
}

pub(crate) fn cholesky(a: &[f64], m: usize) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), m * m);
    let mut l = vec![0.0; m * m];
    for j in 0..m {
        let mut d = a[j * m + j];
        for k in 0..j {
            d -= l[j * m + k] * l[j * m + k];
        }
        if !d.is_finite() || d <= 0.0 {
            return Err(SipError::NotPositiveDefinite {
                pivot: j + 1,
                value: d,
            });
        }
        let d = d.sqrt();
        l[j * m + j] = d;
        for i in j + 1..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            l[i * m + j] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L y = b` for lower-triangular row-major `L`.
pub(crate) fn forward_substitute(l: &[f64], b: &[f64]) -> Vec<f64> {
    let m = b.len();
    let mut y = vec![0.0; m];
    for i in 0..m {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * m + k] * y[k];
        }
        y[i] = s / l[i * m + i];
    }
    y
}

/// `n · ρ̂' Σ⁻¹ ρ̂`, evaluated as `n · |L⁻¹ρ̂|²` with `Σ = LL'`.
pub fn quadratic_statistic(rho_hat: &[f64], sigma: &SigmaRho, n: usize) -> Result<f64> {
    if rho_hat.len() != sigma.m() {
        return Err(SipError::invalid(format!(
            "rho_hat has length {} but sigma is {}x{}",
            rho_hat.len(),
            sigma.m(),
            sigma.m()
        )));
    }
    let l = sigma.cholesky()?;
    let y = forward_substitute(&l, rho_hat);
    Ok(n as f64 * y.iter().map(|v| v * v).sum::<f64>())
}

const GAMMA_EPS: f64 = 1e-12;
const GAMMA_MAX_ITER: usize = 10_000;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        // series for P(a, x)
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..GAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_EPS {
                break;
            }
        }
        (1.0 - sum * log_prefactor.exp()).clamp(0.0, 1.0)
    } else {
        // modified Lentz continued fraction for Q(a, x)
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                break;
            }
        }
        (log_prefactor.exp() * h).clamp(0.0, 1.0)
    }
}

/// `P(χ²_df > x)`.
pub fn chi_square_sf(x: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(SipError::invalid("degrees of freedom must be at least 1"));
    }
    if x.is_nan() || x < 0.0 {
        return Err(SipError::invalid(format!(
            "chi-square argument must be nonnegative, got {x}"
        )));
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(gamma_q(df as f64 / 2.0, x / 2.0))
}
