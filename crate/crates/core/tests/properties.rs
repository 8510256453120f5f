use proptest::prelude::*;

use sip_core::acf::{acf_from_json, acf_to_json};
use sip_core::{
    build_dense_circulant, build_sigma_rho, check_theta_annihilating, classical_acf,
    compute_lag_diffs, estimate_gamma, project_onto_shift_immune, quadratic_form_from_t,
    quadratic_statistic, shift_immune_acf, sip_test, NoiseSpec, ShiftImmuneCoefficients, SimConfig,
    SipVariant, TimeSeries,
};

fn dense_form(a0: f64, a: &[f64], x: &[f64]) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = i.abs_diff(j).min(n - i.abs_diff(j));
            let c = match d {
                0 => a0,
                d if d <= a.len() => a[d - 1],
                _ => 0.0,
            };
            s += x[i] * c * x[j];
        }
    }
    s
}

/// Solves `M z = b` by Gaussian elimination with partial pivoting.
fn solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let k = b.len();
    for col in 0..k {
        let p = (col..k)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        m.swap(col, p);
        b.swap(col, p);
        for r in col + 1..k {
            let f = m[r][col] / m[col][col];
            let pivot_row = m[col].clone();
            for (dst, src) in m[r][col..].iter_mut().zip(&pivot_row[col..]) {
                *dst -= f * src;
            }
            b[r] -= f * b[col];
        }
    }
    let mut z = vec![0.0; k];
    for r in (0..k).rev() {
        let s: f64 = (r + 1..k).map(|c| m[r][c] * z[c]).sum();
        z[r] = (b[r] - s) / m[r][r];
    }
    z
}

/// `v' (C'ΣC)^{-1} v` with `v = C't`, for `C` given column-wise.
fn generic_statistic(cols: &[Vec<f64>], sigma: &[Vec<f64>], t: &[f64]) -> f64 {
    let k = cols.len();
    let v: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().zip(t).map(|(a, b)| a * b).sum())
        .collect();
    let mut g = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let mut s = 0.0;
            for (p, row) in sigma.iter().enumerate() {
                for (q, &sv) in row.iter().enumerate() {
                    s += cols[i][p] * sv * cols[j][q];
                }
            }
            g[i][j] = s;
        }
    }
    let z = solve(g, v.clone());
    v.iter().zip(&z).map(|(a, b)| a * b).sum()
}

fn sigma_k(k: usize, gamma0: f64, kappa4: f64, w: f64) -> Vec<Vec<f64>> {
    (1..=k)
        .map(|i| {
            (1..=k)
                .map(|j| {
                    let id = if i == j { 1.0 } else { 0.0 };
                    4.0 * gamma0 * gamma0 * (id + (kappa4 - 1.0) + 2.0 * w * i.min(j) as f64)
                })
                .collect()
        })
        .collect()
}

fn step_series() -> impl Strategy<Value = Vec<f64>> {
    (
        prop::collection::vec(-3.0f64..3.0, 40..160),
        prop::collection::vec((-5.0f64..5.0, 10usize..40), 1..5),
    )
        .prop_map(|(noise, segments)| {
            let mut levels = Vec::new();
            for (level, len) in segments {
                levels.extend(std::iter::repeat_n(level, len));
            }
            noise
                .iter()
                .enumerate()
                .map(|(i, e)| e + levels[i % levels.len()])
                .collect()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn t_representation_matches_dense(
        x in prop::collection::vec(-10.0f64..10.0, 5..=64),
        raw in prop::collection::vec(-2.0f64..2.0, 1..=31),
    ) {
        let n = x.len();
        let l = raw.len().min((n - 1) / 2);
        let a = raw[..l].to_vec();
        let c = ShiftImmuneCoefficients::shift_invariant(a.clone());
        let stats = compute_lag_diffs(&TimeSeries::new(x.clone()).unwrap(), l).unwrap();
        let via_t = quadratic_form_from_t(&c, &stats).unwrap();
        let dense = dense_form(c.a0(), &a, &x);
        let scale = x.iter().map(|v| v * v).sum::<f64>()
            * (c.a0().abs() + 2.0 * a.iter().map(|v| v.abs()).sum::<f64>());
        prop_assert!((via_t - dense).abs() <= 1e-10 * scale.max(1e-300));
    }

    #[test]
    fn annihilation_check_agrees_with_membership(
        raw in prop::collection::vec(-2.0f64..2.0, 3..=10),
        project in any::<bool>(),
        extra in 1usize..30,
    ) {
        let l = raw.len();
        let n = 2 * l + extra;
        let (coeffs, member) = if project {
            let a = project_onto_shift_immune(&raw).unwrap();
            (ShiftImmuneCoefficients::new(a).unwrap(), true)
        } else {
            let c = ShiftImmuneCoefficients::with_a0(raw.clone(), 0.0);
            let member = c.is_shift_immune();
            (c, member)
        };
        let row = build_dense_circulant(&coeffs, n).unwrap();
        prop_assert_eq!(check_theta_annihilating(&row, l).unwrap(), member);
    }

    #[test]
    fn projection_is_idempotent_and_lands_in_class(raw in prop::collection::vec(-5.0f64..5.0, 3..=20)) {
        let p = project_onto_shift_immune(&raw).unwrap();
        let pp = project_onto_shift_immune(&p).unwrap();
        for (u, v) in p.iter().zip(&pp) {
            prop_assert!((u - v).abs() < 1e-12 * (1.0 + u.abs()));
        }
        let s0: f64 = p.iter().sum();
        let s1: f64 = p.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum();
        let scale: f64 = raw.iter().map(|v| v.abs()).sum::<f64>() * raw.len() as f64;
        prop_assert!(s0.abs() < 1e-12 * scale && s1.abs() < 1e-12 * scale);
    }

    #[test]
    fn estimates_ignore_global_shift(x in step_series(), c in -1.0e3f64..1.0e3, m in 1usize..=4) {
        let xs = TimeSeries::new(x).unwrap();
        let ys = xs.shifted(c).unwrap();
        let a = estimate_gamma(&xs, m);
        let b = estimate_gamma(&ys, m);
        if let (Ok(a), Ok(b)) = (a, b) {
            let tol = 1e-9 * (1.0 + a.gamma0_hat.abs());
            prop_assert!((a.gamma0_hat - b.gamma0_hat).abs() < tol);
            for (u, v) in a.gamma_hat.iter().zip(&b.gamma_hat) {
                prop_assert!((u - v).abs() < tol);
            }
        }
        for variant in [SipVariant::Sip1, SipVariant::Sip2] {
            if let (Ok(a), Ok(b)) = (sip_test(&xs, m, variant, false), sip_test(&ys, m, variant, false)) {
                prop_assert!((a.statistic - b.statistic).abs() < 1e-7 * (1.0 + a.statistic));
            }
        }
    }

    #[test]
    fn sigma_is_positive_definite_and_statistic_falls_with_w(
        m in 1usize..=16,
        w in 0.0f64..5.0,
        dw in 0.0f64..5.0,
        rho in prop::collection::vec(-0.3f64..0.3, 16),
    ) {
        let lo = build_sigma_rho(m, w).unwrap();
        let hi = build_sigma_rho(m, w + dw).unwrap();
        prop_assert!(lo.cholesky().is_ok());
        let r = &rho[..m];
        let a = quadratic_statistic(r, &lo, 1000).unwrap();
        let b = quadratic_statistic(r, &hi, 1000).unwrap();
        prop_assert!(b <= a * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn sigma_rho_is_congruence_of_lag_difference_covariance(
        m in 1usize..=6,
        w in 0.0f64..3.0,
        kappa4 in 1.0f64..12.0,
        gamma0 in 0.2f64..5.0,
    ) {
        let n = 1000;
        let k = m + 2;
        let sk = sigma_k(k, gamma0, kappa4, w);
        let basis: Vec<Vec<f64>> = (1..=m)
            .map(|h| ShiftImmuneCoefficients::sip_basis(h, m, n).unwrap().padded(k).unwrap().coeffs().to_vec())
            .collect();
        let sigma = build_sigma_rho(m, w).unwrap();
        let nn = (n * n) as f64;
        for i in 0..m {
            for j in 0..m {
                let mut s = 0.0;
                for p in 0..k {
                    for q in 0..k {
                        s += basis[i][p] * sk[p][q] * basis[j][q];
                    }
                }
                let expect = gamma0 * gamma0 * sigma.get(i + 1, j + 1);
                prop_assert!((nn * s - expect).abs() < 1e-9 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn statistic_is_invariant_to_basis_choice(
        t in prop::collection::vec(1.0f64..50.0, 10),
        q in prop::collection::vec(-1.0f64..1.0, 64),
        m in 1usize..=8,
        w in 0.0f64..2.0,
    ) {
        let k = m + 2;
        let sk = sigma_k(k, 1.3, 4.0, w);
        let basis: Vec<Vec<f64>> = (1..=m)
            .map(|h| ShiftImmuneCoefficients::sip_basis(h, m, 500).unwrap().padded(k).unwrap().coeffs().to_vec())
            .collect();
        let mut qm: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| q[i * 8 + j]).collect()).collect();
        for (i, row) in qm.iter_mut().enumerate() {
            row[i] += 4.0;
        }
        let mixed: Vec<Vec<f64>> = (0..m)
            .map(|j| (0..k).map(|p| (0..m).map(|i| basis[i][p] * qm[i][j]).sum()).collect())
            .collect();
        let tv = &t[..k];
        let a = generic_statistic(&basis, &sk, tv);
        let b = generic_statistic(&mixed, &sk, tv);
        prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(1e-12));
    }

    #[test]
    fn acf_json_round_trips(x in step_series(), s in 1usize..=6) {
        let xs = TimeSeries::new(x).unwrap();
        if let Ok(d) = shift_immune_acf(&xs, s) {
            prop_assert_eq!(acf_from_json(&acf_to_json(&d)).unwrap(), d);
        }
        let d = classical_acf(&xs, s).unwrap();
        prop_assert_eq!(acf_from_json(&acf_to_json(&d)).unwrap(), d);
    }

    #[test]
    fn ma_autocovariance_is_symmetric_sum(coeffs in prop::collection::vec(-0.9f64..0.9, 1..=5)) {
        let spec = NoiseSpec::ma(coeffs.clone());
        let mut c = vec![1.0];
        c.extend(coeffs.iter().copied());
        for h in 0..=c.len() {
            let expect: f64 = (0..c.len()).filter(|i| i + h < c.len()).map(|i| c[i] * c[i + h]).sum();
            prop_assert!((spec.autocovariance(h) - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn config_toml_round_trips() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for entry in std::fs::read_dir(dir).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        let cfg = SimConfig::from_toml(&text).unwrap();
        assert_eq!(SimConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
