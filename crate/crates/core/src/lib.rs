//! Shift-immune portmanteau (SIP) tests for serial correlation in series
//! whose mean is piecewise constant with many, unknown change points.
//!
//! The building block is the circular lag-difference sum
//! `T_h = Σ (X_i - X_{i+h})²`. Linear combinations `-Σ a_h T_h` with
//! `Σ a_h = 0` and `Σ h·a_h = 0` have expectations free of the mean profile
//! as long as segments are at least as long as the combination's order; the
//! SIP statistic is a χ²-calibrated quadratic form in such combinations.
//!
//! ```
//! use sip_core::{sip_test, SipVariant, TimeSeries};
//!
//! let x: Vec<f64> = (0..400)
//!     .map(|i| if (i / 50) % 2 == 0 { 0.0 } else { 10.0 } + ((i * 7919) % 13) as f64 / 13.0)
//!     .collect();
//! let res = sip_test(&TimeSeries::new(x).unwrap(), 4, SipVariant::Sip2, false).unwrap();
//! assert!((0.0..=1.0).contains(&res.p_value));
//! ```

pub mod acf;
pub mod cli;
pub mod covariance;
pub mod error;
pub mod estimators;
pub mod portmanteau;
pub mod quadform;
pub mod simulate;

pub use acf::{classical_acf, emit_acf, shift_immune_acf, AcfData, AcfFormat, AcfKind};
pub use covariance::{build_sigma_rho, chi_square_sf, quadratic_statistic, SigmaRho};
pub use error::{Result, SipError};
pub use estimators::{
    estimate_gamma, estimate_w_diff, eve_fit, AcovEstimates, JumpEnergyEstimate, WMethod,
};
pub use portmanteau::{
    box_pierce, oracle_test, pseudo_oracle_test, sip_test, BaselineMethod, BaselineResult,
    SipTestResult, SipVariant,
};
pub use quadform::{
    build_dense_circulant, check_theta_annihilating, compute_lag_diffs, project_onto_shift_immune,
    quadratic_form_from_t, LagDiffStats, ShiftImmuneCoefficients, TimeSeries, ToeplitzRow,
};
pub use simulate::{
    generate_mean_profile, generate_noise, ma_autocorrelations, run_rejection_study, MeanProfile,
    Method, NoiseFamily, NoiseSpec, SimConfig, SimReport, SimRow,
};
