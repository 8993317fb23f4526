use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use super::config::ExperimentConfig;
use super::stats::{interquartile_range, mean, std_error};
use crate::dgp::{ModelInstance, VDist};
use crate::error::{Error, Result};
use crate::estimators::{fit, fit_on_subset, EstimatorKind, EstimatorSpec};
use crate::linalg::{lp_norm, singular_values};

/// Scaled estimation error norms `‖Σ^{1/2}(β̂ - β)/σ‖₂` across replications.
#[derive(Debug, Clone, PartialEq)]
pub struct TauEstimate {
    pub per_replication: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
    pub interquartile_range: f64,
    /// `√(κ/(1-κ))` with `κ = p/n`, for least squares under `l ≡ 1` and `p < n`.
    pub reference: Option<f64>,
}

fn scaled_errors(
    estimator: &EstimatorSpec,
    config: &ExperimentConfig,
    replications: usize,
) -> Result<Vec<DVector<f64>>> {
    estimator.validate()?;
    let design = config.realize_design()?;
    let beta = config.beta.realize(&design)?;
    (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let instance = ModelInstance::generate(&design, &beta, config.sigma, config.seed, r)?;
            let fitted = fit(estimator, &instance.x, &instance.y)?;
            Ok(instance.scaled_error(&fitted.beta_hat))
        })
        .collect()
}

pub fn estimate_tau(
    estimator: &EstimatorSpec,
    config: &ExperimentConfig,
    replications: usize,
) -> Result<TauEstimate> {
    let norms: Vec<f64> = scaled_errors(estimator, config, replications)?
        .iter()
        .map(|e| e.norm())
        .collect();
    let (n, p) = (config.design.n, config.design.p);
    let reference = (matches!(estimator.kind, EstimatorKind::Ols)
        && config.design.l_dist.is_constant()
        && p < n)
        .then(|| {
            let kappa = p as f64 / n as f64;
            (kappa / (1.0 - kappa)).sqrt()
        });
    Ok(TauEstimate {
        mean: mean(&norms),
        std_error: std_error(&norms),
        interquartile_range: interquartile_range(&norms),
        per_replication: norms,
        reference,
    })
}

/// `‖Σ^{1/2}(β̂ - β)/σ‖_{2+δ}` per replication.
pub fn lp_norm_diagnostic(
    estimator: &EstimatorSpec,
    config: &ExperimentConfig,
    delta: f64,
) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta <= 2.0) {
        return Err(Error::invalid(
            "delta",
            format!("must lie in (0, 2], got {delta}"),
        ));
    }
    Ok(scaled_errors(estimator, config, config.replications)?
        .iter()
        .map(|e| lp_norm(e, 2.0 + delta))
        .collect())
}

/// `‖Σ^{1/2}(β̂ - β̂₍₁₎)/σ‖₂`: how far the fit moves when the first row is dropped.
pub fn perturbation_norm(
    estimator: &EstimatorSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma_sqrt: &DMatrix<f64>,
    sigma: f64,
) -> Result<f64> {
    if x.nrows() < 2 {
        return Err(Error::invalid("n", "needs at least 2 observations"));
    }
    let full = fit(estimator, x, y)?;
    let reduced = fit_on_subset(estimator, x, y, &[0]).map_err(|e| Error::Refit {
        index: 0,
        source: Box::new(e),
    })?;
    Ok((sigma_sqrt * (full.beta_hat - reduced.beta_hat)).norm() / sigma)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralDiagnostics {
    /// `trace (X'X)^†`.
    pub trace_pinv: f64,
    /// `trace ((X'X)^†)²`.
    pub trace_pinv_sq: f64,
    /// Smallest eigenvalue of `X'X/n` (zero when `p > n`).
    pub lambda_min: f64,
}

fn pinv_trace(singular_values: &DVector<f64>, cutoff: f64, m: i32) -> f64 {
    singular_values
        .iter()
        .filter(|&&s| s > cutoff)
        .map(|&s| s.powi(-2 * m))
        .sum()
}

fn cutoff(x: &DMatrix<f64>, singular_values: &DVector<f64>) -> f64 {
    f64::EPSILON * x.nrows().max(x.ncols()) as f64 * singular_values.max()
}

/// All spectral quantities from one set of singular values.
pub fn spectral_diagnostics(x: &DMatrix<f64>) -> SpectralDiagnostics {
    let (n, p) = x.shape();
    let s = singular_values(x);
    let cut = cutoff(x, &s);
    let lambda_min = if p > n {
        0.0
    } else {
        s.min().powi(2) / n as f64
    };
    SpectralDiagnostics {
        trace_pinv: pinv_trace(&s, cut, 1),
        trace_pinv_sq: pinv_trace(&s, cut, 2),
        lambda_min,
    }
}

/// `trace ((X'X)^†)^m`.
pub fn trace_pinv_power(x: &DMatrix<f64>, m: u32) -> f64 {
    let s = singular_values(x);
    pinv_trace(&s, cutoff(x, &s), m as i32)
}

/// Kolmogorov–Smirnov distance between the law of `b'v/‖b‖₂` (estimated from
/// `draws` samples) and the standard normal.
pub fn projection_normality_ks<R: Rng + ?Sized>(
    b: &DVector<f64>,
    v_dist: &VDist,
    draws: usize,
    rng: &mut R,
) -> Result<f64> {
    v_dist.validate()?;
    let norm = b.norm();
    if !(norm > 0.0) {
        return Err(Error::invalid("b", "must be non-zero"));
    }
    if draws == 0 {
        return Err(Error::EmptySample);
    }
    let direction = b / norm;
    let mut sample: Vec<f64> = (0..draws)
        .map(|_| direction.iter().map(|&w| w * v_dist.sample(rng)).sum())
        .collect();
    sample.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let m = draws as f64;
    Ok(sample
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let f = normal.cdf(t);
            ((i + 1) as f64 / m - f).max(f - i as f64 / m)
        })
        .fold(0.0, f64::max))
}
