//! ACF values with 95% bands: the shift-immune variant and the classical one
//! for side-by-side comparison, plus CSV/JSON/SVG emitters.
//!
//! The shift-immune value at lag `h` uses order `h`, i.e. the contrast
//! `(-T_h + 2T_{h+1} - T_{h+2}) / (2n)` over `γ̂_0` at that order, so it tracks
//! `γ_h - 2γ_{h+1} + γ_{h+2}` rather than `γ_h` itself. All lags share one
//! band built from `ŵ_1` at order `s`.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SipError};
use crate::estimators::{check_order, raw_autocovariances, w_diff_from_lag_diffs};
use crate::portmanteau::sample_autocorrelations;
use crate::quadform::{compute_lag_diffs, TimeSeries};

pub const ACF_SCHEMA: &str = "sip-acf/1";
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcfKind {
    ShiftImmune,
    Classical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfData {
    pub kind: AcfKind,
    pub max_lag: usize,
    /// Lags `1..=max_lag`; lag 0 is never included.
    pub values: Vec<f64>,
    /// Half-width of the symmetric band.
    pub bound: f64,
    /// `max(ŵ_1, 0)` at order `max_lag`; `None` for the classical kind.
    pub w_hat_used: Option<f64>,
    pub n: usize,
}

/// `1.96 · √((6 + 4w)/n)`.
pub fn shift_immune_bound(w: f64, n: usize) -> f64 {
    Z_95 * ((6.0 + 4.0 * w) / n as f64).sqrt()
}

pub fn shift_immune_acf(x: &TimeSeries, s: usize) -> Result<AcfData> {
    let n = x.len();
    if s == 0 {
        return Err(SipError::invalid("max lag must be at least 1"));
    }
    check_order(s, n)?;
    let stats = compute_lag_diffs(x, s + 2)?;
    let mut values = Vec::with_capacity(s);
    let mut gamma0_at_s = 0.0;
    for h in 1..=s {
        let (gamma0, gamma) = raw_autocovariances(&stats, h)?;
        if gamma0 <= 0.0 {
            return Err(SipError::degenerate(
                format!("gamma0_hat at lag {h} of the shift-immune ACF"),
                gamma0,
            ));
        }
        values.push(gamma[h - 1] / gamma0);
        gamma0_at_s = gamma0;
    }
    let w = w_diff_from_lag_diffs(&stats, s, gamma0_at_s)?.w_clamped;
    Ok(AcfData {
        kind: AcfKind::ShiftImmune,
        max_lag: s,
        values,
        bound: shift_immune_bound(w, n),
        w_hat_used: Some(w),
        n,
    })
}

pub fn classical_acf(x: &TimeSeries, s: usize) -> Result<AcfData> {
    let n = x.len();
    let values = sample_autocorrelations(x.values(), s, true)?;
    Ok(AcfData {
        kind: AcfKind::Classical,
        max_lag: s,
        values,
        bound: Z_95 / (n as f64).sqrt(),
        w_hat_used: None,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcfFormat {
    Csv,
    Json,
    Svg,
}

impl AcfFormat {
    pub fn extension(self) -> &'static str {
        match self {
            AcfFormat::Csv => "csv",
            AcfFormat::Json => "json",
            AcfFormat::Svg => "svg",
        }
    }
}

impl FromStr for AcfFormat {
    type Err = SipError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(AcfFormat::Csv),
            "json" => Ok(AcfFormat::Json),
            "svg" => Ok(AcfFormat::Svg),
            other => Err(SipError::invalid(format!("unknown ACF format {other:?}"))),
        }
    }
}

#[derive(Serialize)]
struct AcfJsonOut<'a> {
    schema: &'static str,
    #[serde(flatten)]
    data: &'a AcfData,
}

#[derive(Deserialize)]
struct AcfJsonIn {
    schema: String,
    #[serde(flatten)]
    data: AcfData,
}

pub fn acf_to_json(data: &AcfData) -> String {
    serde_json::to_string_pretty(&AcfJsonOut {
        schema: ACF_SCHEMA,
        data,
    })
    .expect("AcfData serializes")
}

pub fn acf_from_json(s: &str) -> Result<AcfData> {
    let parsed: AcfJsonIn =
        serde_json::from_str(s).map_err(|e| SipError::invalid(format!("bad ACF JSON: {e}")))?;
    if parsed.schema != ACF_SCHEMA {
        return Err(SipError::invalid(format!(
            "unsupported ACF schema {:?}",
            parsed.schema
        )));
    }
    Ok(parsed.data)
}

pub fn emit_acf<W: Write>(data: &AcfData, format: AcfFormat, out: &mut W) -> io::Result<()> {
    match format {
        AcfFormat::Csv => {
            writeln!(out, "lag,value,bound_lo,bound_hi")?;
            for (i, v) in data.values.iter().enumerate() {
                writeln!(out, "{},{},{},{}", i + 1, v, -data.bound, data.bound)?;
            }
            Ok(())
        }
        AcfFormat::Json => {
            out.write_all(acf_to_json(data).as_bytes())?;
            writeln!(out)
        }
        AcfFormat::Svg => out.write_all(render_svg(data).as_bytes()),
    }
}

fn render_svg(data: &AcfData) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const PAD: f64 = 40.0;
    let s = data.values.len().max(1) as f64;
    let peak = data
        .values
        .iter()
        .fold(data.bound, |acc, v| acc.max(v.abs()))
        .max(1e-12)
        * 1.1;
    let x_of = |lag: f64| PAD + (W - 2.0 * PAD) * lag / (s + 1.0);
    let y_of = |v: f64| H / 2.0 - (H / 2.0 - PAD) * v / peak;
    let title = match data.kind {
        AcfKind::ShiftImmune => "Shift-immune ACF",
        AcfKind::Classical => "ACF",
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{title} (n = {})</text>"#,
        W / 2.0,
        data.n
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{PAD}" y1="{y0:.2}" x2="{x2}" y2="{y0:.2}" stroke="black"/>"#,
        y0 = y_of(0.0),
        x2 = W - PAD
    );
    for b in [data.bound, -data.bound] {
        let _ = writeln!(
            svg,
            r#"<line x1="{PAD}" y1="{y:.2}" x2="{x2}" y2="{y:.2}" stroke="blue" stroke-dasharray="6,4"/>"#,
            y = y_of(b),
            x2 = W - PAD
        );
    }
    for (i, v) in data.values.iter().enumerate() {
        let x = x_of((i + 1) as f64);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{y1:.2}" stroke="black" stroke-width="2"/>"#,
            y0 = y_of(0.0),
            y1 = y_of(*v)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="middle" font-family="sans-serif" font-size="10">{}</text>"#,
            i + 1,
            y = H - PAD / 2.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::build_sigma_rho;

    fn noisy_steps(n: usize, block: usize, jump: f64, seed: u64) -> TimeSeries {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n)
            .map(|i| {
                let level = if (i / block).is_multiple_of(2) {
                    0.0
                } else {
                    jump
                };
                level + rng.sample::<f64, _>(rand_distr::StandardNormal)
            })
            .collect();
        TimeSeries::new(v).unwrap()
    }

    #[test]
    fn worked_example_first_lag() {
        let x = TimeSeries::new(vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]).unwrap();
        let acf = shift_immune_acf(&x, 1).unwrap();
        assert!((acf.values[0] - 0.25 / 9.625).abs() < 1e-15);
        assert_eq!(acf.w_hat_used, Some(0.0));
        assert!((acf.bound - 1.96 * (6.0f64 / 8.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let x = TimeSeries::new(vec![1.0; 50]).unwrap();
        let err = shift_immune_acf(&x, 3).unwrap_err();
        match err {
            SipError::DegenerateVariance { context, .. } => assert!(context.contains("lag 1")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(classical_acf(&x, 3).is_err());
    }

    #[test]
    fn lag_h_uses_second_difference_contrast() {
        let x = noisy_steps(600, 150, 2.0, 11);
        let stats = compute_lag_diffs(&x, 7).unwrap();
        let acf = shift_immune_acf(&x, 5).unwrap();
        let n2 = 2.0 * 600.0;
        for h in 1..=5 {
            let g = (-stats.t(h) + 2.0 * stats.t(h + 1) - stats.t(h + 2)) / n2;
            let g0 = ((h + 2) as f64 * stats.t(h + 1) - (h + 1) as f64 * stats.t(h + 2)) / n2;
            assert!((acf.values[h - 1] - g / g0).abs() < 1e-12);
        }
    }

    #[test]
    fn band_matches_last_sigma_diagonal() {
        let x = noisy_steps(400, 40, 2.0, 12);
        let s = 6;
        let acf = shift_immune_acf(&x, s).unwrap();
        let w = acf.w_hat_used.unwrap();
        let sigma = build_sigma_rho(s, w).unwrap();
        let via_sigma = Z_95 * (sigma.get(s, s) / 400.0).sqrt();
        assert!((acf.bound - via_sigma).abs() <= 1e-12 * acf.bound);
    }

    #[test]
    fn classical_band_and_shape() {
        let v: Vec<f64> = (0..100).map(|i| (i as f64 * 0.7).sin()).collect();
        let x = TimeSeries::new(v).unwrap();
        let acf = classical_acf(&x, 10).unwrap();
        assert_eq!(acf.values.len(), 10);
        assert_eq!(acf.bound, 1.96 / 10.0);
        assert_eq!(acf.w_hat_used, None);
        assert!(classical_acf(&x, 100).is_err());
    }

    #[test]
    fn two_level_series_fools_classical_acf() {
        let n = 1000;
        let v: Vec<f64> = (0..n).map(|i| if i < n / 2 { -1.0 } else { 1.0 }).collect();
        let x = TimeSeries::new(v).unwrap();
        let acf = classical_acf(&x, 1).unwrap();
        // Σ c_i c_{i+1} = n - 1 - 2 against Σ c_i² = n
        assert!((acf.values[0] - (n as f64 - 3.0) / n as f64).abs() < 1e-12);
    }

    #[test]
    fn csv_line_format() {
        let d = AcfData {
            kind: AcfKind::ShiftImmune,
            max_lag: 1,
            values: vec![0.5],
            bound: 0.1,
            w_hat_used: Some(0.0),
            n: 10,
        };
        let mut buf = Vec::new();
        emit_acf(&d, AcfFormat::Csv, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "lag,value,bound_lo,bound_hi\n1,0.5,-0.1,0.1\n"
        );
    }

    #[test]
    fn json_carries_schema_and_round_trips() {
        let d = AcfData {
            kind: AcfKind::Classical,
            max_lag: 2,
            values: vec![0.123456789, -0.5],
            bound: 0.0196,
            w_hat_used: None,
            n: 10000,
        };
        let js = acf_to_json(&d);
        let v: serde_json::Value = serde_json::from_str(&js).unwrap();
        assert_eq!(v["schema"], "sip-acf/1");
        assert_eq!(v["kind"], "classical");
        assert_eq!(acf_from_json(&js).unwrap(), d);
        assert!(acf_from_json(&js.replace("sip-acf/1", "sip-acf/9")).is_err());
    }

    #[test]
    fn svg_has_band_and_sticks() {
        let d = AcfData {
            kind: AcfKind::ShiftImmune,
            max_lag: 3,
            values: vec![0.2, -0.1, 0.05],
            bound: 0.08,
            w_hat_used: Some(0.3),
            n: 500,
        };
        let mut buf = Vec::new();
        emit_acf(&d, AcfFormat::Svg, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("<svg"));
        assert!(s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("stroke-dasharray").count(), 2);
        assert_eq!(s.matches("stroke-width=\"2\"").count(), 3);
    }
}
