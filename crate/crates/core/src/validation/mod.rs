//! Monte Carlo checks of coverage, interval length, estimator regularity and
//! random-matrix limits.

mod config;
mod diagnostics;
mod experiment;
mod length;
mod stats;

pub use config::{DiagnosticsToggle, ExperimentConfig};
pub use diagnostics::{
    estimate_tau, lp_norm_diagnostic, perturbation_norm, projection_normality_ks,
    spectral_diagnostics, trace_pinv_power, SpectralDiagnostics, TauEstimate,
};
pub use experiment::{
    conditional_coverage, honesty_gap, length_convergence, run_experiment, EstimatorSummary,
    ExperimentReport, LengthConvergence, RecordFlags, ReplicationRecord, SpectralRecord,
};
pub use length::{
    asymptotic_length_oracle, length_monotonicity_scan, length_oracle_detail, LengthOracle,
    LengthScan, OracleMethod, ScanPoint,
};
pub use stats::{mean, median, std_error, Summary};
