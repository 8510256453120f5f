//! Circular lag-difference sums and circulant quadratic forms whose
//! expectation does not depend on a piecewise-constant mean.
//!
//! Everything here works with the circular convention `X[n + i] == X[i]`.
//! The production path is the O(n·K) statistic [`LagDiffStats`]; the dense
//! circulant row built by [`build_dense_circulant`] is an O(n²) oracle used by
//! tests to cross-check the T-representation `X'AX = -Σ a_h T_h`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SipError};

/// Dense oracle matrices are only built up to this size.
pub const DENSE_ORACLE_MAX_N: usize = 1024;

/// Absolute tolerance on the linear coefficient equations.
pub const COEFF_TOL: f64 = 1e-10;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = CompensatedSum::default();
    for v in it {
        acc.add(v);
    }
    acc.value()
}

/// An observed series `X_1..X_n`. Lagged reads wrap around.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeSeries {
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(SipError::invalid(
                "time series must contain at least one value",
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SipError::invalid(format!(
                "time series value at index {i} is not finite"
            )));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `X + c·1`.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v + c).collect())
    }

    /// Circular read, 0-based.
    #[inline]
    pub fn circular(&self, i: usize) -> f64 {
        self.values[i % self.values.len()]
    }
}

impl TryFrom<Vec<f64>> for TimeSeries {
    type Error = SipError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<TimeSeries> for Vec<f64> {
    fn from(ts: TimeSeries) -> Self {
        ts.values
    }
}

/// `T_h = Σ_i (X_i - X_{i+h})²` for `h = 1..=k_max`, circular.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagDiffStats {
    t: Vec<f64>,
    n: usize,
}

impl LagDiffStats {
    /// Source series length.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k_max(&self) -> usize {
        self.t.len()
    }

    /// `T_h`, 1-based. Panics if `h` is 0 or above `k_max`.
    #[inline]
    pub fn t(&self, h: usize) -> f64 {
        assert!(
            h >= 1 && h <= self.t.len(),
            "lag {h} outside 1..={}",
            self.t.len()
        );
        self.t[h - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.t
    }
}

/// Computes `T_1..T_{k_max}` in O(n·k_max) with compensated accumulation.
pub fn compute_lag_diffs(x: &TimeSeries, k_max: usize) -> Result<LagDiffStats> {
    let n = x.len();
    if k_max == 0 || k_max >= n {
        return Err(SipError::invalid(format!(
            "k_max must satisfy 1 <= k_max < n (k_max = {k_max}, n = {n})"
        )));
    }
    let v = x.values();
    let t = (1..=k_max)
        .map(|h| {
            let mut acc = CompensatedSum::default();
            for (a, b) in v[..n - h].iter().zip(&v[h..]) {
                let d = a - b;
                acc.add(d * d);
            }
            // wrap-around pairs (X_{n-h+i}, X_i)
            for (a, b) in v[n - h..].iter().zip(&v[..h]) {
                let d = a - b;
                acc.add(d * d);
            }
            acc.value()
        })
        .collect();
    Ok(LagDiffStats { t, n })
}

/// Coefficients `(a_1..a_L)` of a circulant quadratic form, plus its diagonal `a_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftImmuneCoefficients {
    a: Vec<f64>,
    a0: f64,
}

impl ShiftImmuneCoefficients {
    /// A member of A°_L: `Σ a_h = 0` and `Σ h·a_h = 0`. `a_0` is then zero.
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return Err(SipError::invalid("coefficient vector must be non-empty"));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(SipError::invalid("coefficients must be finite"));
        }
        let c = Self { a, a0: 0.0 };
        if !c.is_shift_immune() {
            let (s0, s1) = c.constraint_residuals();
            return Err(SipError::invalid(format!(
                "coefficients are not in A°_L (Σa = {s0:e}, Σh·a = {s1:e})"
            )));
        }
        Ok(c)
    }

    /// Unchecked row with an explicit diagonal. Used to probe the general
    /// symmetric-Toeplitz characterisation with arbitrary coefficients.
    pub fn with_a0(a: Vec<f64>, a0: f64) -> Self {
        Self { a, a0 }
    }

    /// Row-sum-zero completion: `a_0 = -2 Σ a_h`, the only diagonal for which
    /// the form is invariant under a global shift.
    pub fn shift_invariant(a: Vec<f64>) -> Self {
        let a0 = -2.0 * compensated_sum(a.iter().copied());
        Self { a, a0 }
    }

    /// The basis vector used for `γ̂_h` at order `m` (length `m + 2`), scaled by `1/(2n)`.
    pub fn sip_basis(h: usize, m: usize, n: usize) -> Result<Self> {
        if h == 0 || h > m {
            return Err(SipError::invalid(format!(
                "basis index h = {h} outside 1..={m}"
            )));
        }
        let scale = 1.0 / (2.0 * n as f64);
        let mut a = vec![0.0; m + 2];
        a[h - 1] += scale;
        a[m] -= (m + 2 - h) as f64 * scale;
        a[m + 1] += (m + 1 - h) as f64 * scale;
        Ok(Self { a, a0: 0.0 })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.a
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    /// `L`.
    pub fn order(&self) -> usize {
        self.a.len()
    }

    /// `(Σ a_h, Σ h·a_h)`.
    pub fn constraint_residuals(&self) -> (f64, f64) {
        let s0 = compensated_sum(self.a.iter().copied());
        let s1 = compensated_sum(self.a.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v));
        (s0, s1)
    }

    /// Membership in A°_L, relative tolerance 1e-12 against `Σ h·|a_h|`.
    pub fn is_shift_immune(&self) -> bool {
        let (s0, s1) = self.constraint_residuals();
        let scale0: f64 = self
            .a
            .iter()
            .map(|v| v.abs())
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        let scale1: f64 = self
            .a
            .iter()
            .enumerate()
            .map(|(i, v)| (i + 1) as f64 * v.abs())
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        s0.abs() <= 1e-12 * scale0 && s1.abs() <= 1e-12 * scale1
    }

    /// Embedding into A°_{L'} for `L' >= L` by trailing zeros.
    pub fn padded(&self, len: usize) -> Result<Self> {
        if len < self.a.len() {
            return Err(SipError::invalid(format!(
                "cannot pad order {} down to {len}",
                self.a.len()
            )));
        }
        let mut a = self.a.clone();
        a.resize(len, 0.0);
        Ok(Self { a, a0: self.a0 })
    }
}

/// `-Σ_{h=1..L} a_h T_h`, which equals `X'A X` for the circulant `A` induced by `a`.
pub fn quadratic_form_from_t(a: &ShiftImmuneCoefficients, t: &LagDiffStats) -> Result<f64> {
    let l = a.order();
    if l > t.k_max() {
        return Err(SipError::invalid(format!(
            "coefficient order {l} exceeds available lags {}",
            t.k_max()
        )));
    }
    let expected_a0 = -2.0 * a.constraint_residuals().0;
    let scale = a.coeffs().iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    if (a.a0() - expected_a0).abs() > COEFF_TOL * scale {
        return Err(SipError::invalid(
            "T-representation requires a_0 = -2 Σ a_h (row sums zero)",
        ));
    }
    Ok(-compensated_sum(
        a.coeffs().iter().zip(t.as_slice()).map(|(ah, th)| ah * th),
    ))
}

/// First row `(a_0..a_{n-1})` of a symmetric Toeplitz matrix, `A_ij = a_{|i-j|}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToeplitzRow {
    coeffs: Vec<f64>,
}

impl ToeplitzRow {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(SipError::invalid("Toeplitz row must be non-empty"));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(SipError::invalid("Toeplitz row entries must be finite"));
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn n(&self) -> usize {
        self.coeffs.len()
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i.abs_diff(j)]
    }

    /// `a_k == a_{n-k}` for all k, i.e. the Toeplitz matrix is also circulant.
    pub fn is_circulant(&self) -> bool {
        let n = self.coeffs.len();
        (1..n).all(|k| self.coeffs[k] == self.coeffs[n - k])
    }

    /// Dense `x'Ax`, O(n²).
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        let n = self.n();
        if x.len() != n {
            return Err(SipError::invalid(format!(
                "vector length {} does not match matrix size {n}",
                x.len()
            )));
        }
        let mut acc = CompensatedSum::default();
        for i in 0..n {
            for j in 0..n {
                acc.add(x[i] * self.entry(i, j) * x[j]);
            }
        }
        Ok(acc.value())
    }
}

/// Row `(a_0, a_1..a_L, 0..0, a_L..a_1)`. Test oracle only.
pub fn build_dense_circulant(a: &ShiftImmuneCoefficients, n: usize) -> Result<ToeplitzRow> {
    let l = a.order();
    if 2 * l >= n {
        return Err(SipError::invalid(format!(
            "circulant needs 2L < n (L = {l}, n = {n})"
        )));
    }
    if n > DENSE_ORACLE_MAX_N {
        return Err(SipError::invalid(format!(
            "dense oracle capped at n <= {DENSE_ORACLE_MAX_N}"
        )));
    }
    let mut row = vec![0.0; n];
    row[0] = a.a0();
    for (i, &v) in a.coeffs().iter().enumerate() {
        let h = i + 1;
        row[h] = v;
        row[n - h] = v;
    }
    ToeplitzRow::new(row)
}

/// Whether `θ'Aθ = 0` for every mean vector whose segments all have length
/// at least `l_min`, checked through the four linear conditions on the row.
pub fn check_theta_annihilating(row: &ToeplitzRow, l_min: usize) -> Result<bool> {
    let n = row.n();
    if l_min == 0 || 2 * l_min >= n {
        return Err(SipError::invalid(format!(
            "l_min must satisfy 1 <= l_min < n/2 (l_min = {l_min}, n = {n})"
        )));
    }
    let a = row.coeffs();
    let l = l_min;

    let eq_diag = a[0] + 2.0 * compensated_sum(a[1..=l].iter().copied());
    let eq_moment = compensated_sum((1..=l).map(|h| h as f64 * a[h]));
    let middle_zero = a[l + 1..n - l].iter().all(|v| v.abs() <= COEFF_TOL);
    let eq_tail = compensated_sum((n - l..n).map(|k| (n - k) as f64 * a[k]));

    Ok(eq_diag.abs() <= COEFF_TOL
        && eq_moment.abs() <= COEFF_TOL
        && middle_zero
        && eq_tail.abs() <= COEFF_TOL)
}

/// Orthogonal projection onto `{a : 1'a = 0, η'a = 0}` with `η = (1, 2, .., k)`.
pub fn project_onto_shift_immune(v: &[f64]) -> Result<Vec<f64>> {
    let k = v.len();
    if k < 3 {
        return Err(SipError::invalid(format!(
            "projection needs length >= 3, got {k}"
        )));
    }
    // orthonormal basis of span{1, η}: e1 = 1/√k, e2 ∝ η - mean(η)
    let kf = k as f64;
    let centre = (kf + 1.0) / 2.0;
    let e2_norm = (kf * (kf * kf - 1.0) / 12.0).sqrt();
    let c1 = compensated_sum(v.iter().copied()) / kf;
    let c2 = compensated_sum(
        v.iter()
            .enumerate()
            .map(|(i, x)| ((i + 1) as f64 - centre) * x),
    ) / (e2_norm * e2_norm);
    Ok(v.iter()
        .enumerate()
        .map(|(i, x)| x - c1 - c2 * ((i + 1) as f64 - centre))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(v: &[f64]) -> TimeSeries {
        TimeSeries::new(v.to_vec()).unwrap()
    }

    fn brute_lag_diff(x: &[f64], h: usize) -> f64 {
        let n = x.len();
        (0..n).map(|i| (x[i] - x[(i + h) % n]).powi(2)).sum()
    }

    #[test]
    fn constant_series_has_zero_diffs() {
        let t = compute_lag_diffs(&ts(&[2.5; 4]), 2).unwrap();
        assert_eq!(t.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn small_examples() {
        let t = compute_lag_diffs(&ts(&[1.0, 2.0, 3.0]), 2).unwrap();
        assert_eq!(t.as_slice(), &[6.0, 6.0]);

        let x = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let oracle: Vec<f64> = (1..=3).map(|h| brute_lag_diff(&x, h)).collect();
        assert_eq!(oracle, vec![128.0, 110.0, 88.0]);
        let t = compute_lag_diffs(&ts(&x), 3).unwrap();
        assert_eq!(t.as_slice(), oracle.as_slice());
    }

    #[test]
    fn k_max_must_be_below_n() {
        assert!(compute_lag_diffs(&ts(&[1.0, 2.0, 3.0]), 3).is_err());
        assert!(compute_lag_diffs(&ts(&[1.0, 2.0, 3.0]), 0).is_err());
        assert!(compute_lag_diffs(&ts(&[1.0]), 1).is_err());
    }

    #[test]
    fn rejects_non_finite_series() {
        assert!(TimeSeries::new(vec![]).is_err());
        assert!(TimeSeries::new(vec![1.0, f64::NAN]).is_err());
        assert!(TimeSeries::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn t_identity_with_circular_products() {
        let x = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let s0: f64 = x.iter().map(|v| v * v).sum();
        let t = compute_lag_diffs(&ts(&x), 3).unwrap();
        for h in 1..=3 {
            let sh: f64 = (0..8).map(|i| x[i] * x[(i + h) % 8]).sum();
            assert_eq!(t.t(h), 2.0 * s0 - 2.0 * sh);
        }
    }

    #[test]
    fn quadratic_form_examples() {
        let x = ts(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]);
        let t = compute_lag_diffs(&x, 3).unwrap();
        let zero = ShiftImmuneCoefficients::new(vec![0.0; 3]).unwrap();
        assert_eq!(quadratic_form_from_t(&zero, &t).unwrap(), 0.0);

        let a = ShiftImmuneCoefficients::new(vec![1.0 / 16.0, -2.0 / 16.0, 1.0 / 16.0]).unwrap();
        assert!((quadratic_form_from_t(&a, &t).unwrap() - 0.25).abs() < 1e-15);

        let shifted = compute_lag_diffs(&x.shifted(1234.5).unwrap(), 3).unwrap();
        assert_eq!(
            quadratic_form_from_t(&a, &t).unwrap(),
            quadratic_form_from_t(&a, &shifted).unwrap()
        );
    }

    #[test]
    fn quadratic_form_order_checked() {
        let t = compute_lag_diffs(&ts(&[1.0, 5.0, 2.0, 7.0, 3.0]), 2).unwrap();
        let a = ShiftImmuneCoefficients::new(vec![1.0, -2.0, 1.0]).unwrap();
        assert!(matches!(
            quadratic_form_from_t(&a, &t),
            Err(SipError::InvalidArgument(_))
        ));
        let bad_diag = ShiftImmuneCoefficients::with_a0(vec![1.0, 0.0], 0.0);
        assert!(quadratic_form_from_t(&bad_diag, &t).is_err());
    }

    #[test]
    fn membership() {
        assert!(ShiftImmuneCoefficients::new(vec![1.0, -2.0, 1.0]).is_ok());
        assert!(ShiftImmuneCoefficients::new(vec![1.0, -1.0, 0.0]).is_err());
        let a = ShiftImmuneCoefficients::new(vec![1.0, -2.0, 1.0]).unwrap();
        assert!(a.padded(6).unwrap().is_shift_immune());
        assert!(a.padded(2).is_err());
        for m in 1..6 {
            for h in 1..=m {
                assert!(ShiftImmuneCoefficients::sip_basis(h, m, 100)
                    .unwrap()
                    .is_shift_immune());
            }
        }
    }

    #[test]
    fn dense_circulant_rows() {
        let a = ShiftImmuneCoefficients::new(vec![1.0, -2.0, 1.0]).unwrap();
        let row = build_dense_circulant(&a, 8).unwrap();
        assert_eq!(row.coeffs(), &[0.0, 1.0, -2.0, 1.0, 0.0, 1.0, -2.0, 1.0]);
        assert!(row.is_circulant());

        let zero = ShiftImmuneCoefficients::new(vec![0.0; 3]).unwrap();
        assert!(build_dense_circulant(&zero, 8)
            .unwrap()
            .coeffs()
            .iter()
            .all(|&v| v == 0.0));

        assert!(build_dense_circulant(&a, 6).is_err());
        assert!(build_dense_circulant(&a, 7).is_ok());
    }

    #[test]
    fn annihilation_conditions() {
        let zero = ToeplitzRow::new(vec![0.0; 10]).unwrap();
        for l in 1..5 {
            assert!(check_theta_annihilating(&zero, l).unwrap());
        }

        let a = ShiftImmuneCoefficients::new(vec![1.0, -2.0, 1.0]).unwrap();
        let row = build_dense_circulant(&a, 8).unwrap();
        assert!(check_theta_annihilating(&row, 3).unwrap());

        // the row of T_h itself: 2 on the diagonal, -1 at lags h and n-h
        let n = 12;
        for h in 1..=4 {
            let mut r = vec![0.0; n];
            r[0] = 2.0;
            r[h] = -1.0;
            r[n - h] = -1.0;
            let row = ToeplitzRow::new(r).unwrap();
            for l in h..n.div_ceil(2) {
                assert!(!check_theta_annihilating(&row, l).unwrap());
            }
        }

        assert!(check_theta_annihilating(&row, 4).is_err());
        assert!(check_theta_annihilating(&row, 0).is_err());
    }

    #[test]
    fn projection_examples() {
        assert!(project_onto_shift_immune(&[1.0, 2.0]).is_err());
        for k in 3..10 {
            let ones = vec![1.0; k];
            let eta: Vec<f64> = (1..=k).map(|i| i as f64).collect();
            for v in [ones, eta] {
                let p = project_onto_shift_immune(&v).unwrap();
                assert!(p.iter().all(|x| x.abs() < 1e-12), "{p:?}");
            }
        }
        let p = project_onto_shift_immune(&[1.0, 0.0, 0.0]).unwrap();
        let want = [1.0 / 6.0, -2.0 / 6.0, 1.0 / 6.0];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }
}
