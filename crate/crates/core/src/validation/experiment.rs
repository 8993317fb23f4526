use std::fmt;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::diagnostics::{perturbation_norm, spectral_diagnostics, SpectralDiagnostics};
use super::length::asymptotic_length_oracle;
use super::stats::{interquartile_range, median, Summary};
use crate::dgp::{Design, ModelInstance};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, EstimatorSpec};
use crate::intervals::{Band, LooPredictor, Sidedness};
use crate::linalg::lp_norm;
use crate::rng::{substream, Purpose};

/// Fraction of `draws` fresh pairs `(x₀, y₀)` whose response lands in
/// `x₀'β̂ + band`; a √M-consistent estimate of the conditional coverage given
/// the training sample.
pub fn conditional_coverage<R: Rng + ?Sized>(
    beta_hat: &DVector<f64>,
    band: &Band,
    design: &Design,
    beta: &DVector<f64>,
    sigma: f64,
    draws: usize,
    rng: &mut R,
) -> f64 {
    let hits = (0..draws)
        .filter(|_| {
            let (x0, y0) = design.sample_prediction_pair(beta, sigma, rng);
            band.around(x0.dot(beta_hat)).contains(y0)
        })
        .count();
    hits as f64 / draws as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RecordFlags {
    /// The fit or a refit returned an error.
    pub failed: bool,
    /// The fit or a refit hit the iteration cap.
    pub unconverged: bool,
    pub jitter: bool,
    pub degenerate_shrinkage: bool,
    /// Errors have atoms, so the continuity assumption for `τ = 0` fails.
    pub discrete_errors: bool,
}

impl RecordFlags {
    pub fn excluded(&self) -> bool {
        self.failed || self.unconverged
    }

    pub fn parse(text: &str) -> Option<Self> {
        let mut flags = RecordFlags::default();
        for token in text.split('|').filter(|t| !t.is_empty()) {
            match token {
                "failed" => flags.failed = true,
                "unconverged" => flags.unconverged = true,
                "jitter" => flags.jitter = true,
                "degenerate-shrinkage" => flags.degenerate_shrinkage = true,
                "discrete-errors" => flags.discrete_errors = true,
                _ => return None,
            }
        }
        Some(flags)
    }
}

impl fmt::Display for RecordFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = [
            (self.failed, "failed"),
            (self.unconverged, "unconverged"),
            (self.jitter, "jitter"),
            (self.degenerate_shrinkage, "degenerate-shrinkage"),
            (self.discrete_errors, "discrete-errors"),
        ];
        let active: Vec<&str> = names
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
        f.write_str(&active.join("|"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralRecord {
    pub replication: u64,
    pub diagnostics: SpectralDiagnostics,
}

/// One estimator on one training replication. Values are NaN when the
/// record failed or the diagnostic was disabled.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub replication: u64,
    pub estimator: String,
    pub coverage: f64,
    /// `(q̃_{1-α/2} - q̃_{α/2}) / σ`.
    pub scaled_length: f64,
    pub lower_offset: f64,
    pub upper_offset: f64,
    pub tau_hat: f64,
    pub lp_norm: f64,
    pub perturbation_norm: f64,
    pub error: Option<String>,
    pub flags: RecordFlags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub kind: EstimatorKind,
    pub replications: usize,
    pub failures: usize,
    pub coverage: Summary,
    /// `mean_r |ĉ_r - (1-α)|`.
    pub honesty_gap: Summary,
    pub scaled_length: Summary,
    pub tau_hat: Summary,
    pub tau_iqr: f64,
    pub lp_norm: Summary,
    pub perturbation_median: f64,
    /// `ℓ_α(τ̂)` at the mean `τ̂`.
    pub oracle_length: f64,
    pub length_relative_gap: f64,
    /// Closed-form limit of `τ̂` where known.
    pub tau_reference: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub records: Vec<ReplicationRecord>,
    pub spectral: Vec<SpectralRecord>,
    pub summaries: Vec<EstimatorSummary>,
}

impl ExperimentReport {
    pub fn summary(&self, estimator: &str) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.estimator == estimator)
    }

    /// Estimators whose failure count exceeds the configured budget.
    pub fn over_budget(&self) -> Vec<&EstimatorSummary> {
        let allowed = self.config.failure_budget * self.config.replications as f64;
        self.summaries
            .iter()
            .filter(|s| s.failures as f64 > allowed)
            .collect()
    }
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    design: Design,
    beta: DVector<f64>,
}

fn run_one(
    ctx: &Context<'_>,
    spec: &EstimatorSpec,
    instance: &ModelInstance,
    replication: u64,
) -> ReplicationRecord {
    let config = ctx.config;
    let mut record = ReplicationRecord {
        replication,
        estimator: spec.kind.to_string(),
        coverage: f64::NAN,
        scaled_length: f64::NAN,
        lower_offset: f64::NAN,
        upper_offset: f64::NAN,
        tau_hat: f64::NAN,
        lp_norm: f64::NAN,
        perturbation_norm: f64::NAN,
        error: None,
        flags: RecordFlags {
            discrete_errors: !config.design.u_dist.is_continuous(),
            ..Default::default()
        },
    };
    let outcome = (|| -> Result<()> {
        let predictor = LooPredictor::fit(spec, &instance.x, &instance.y)?;
        record.flags.unconverged = !predictor.fit.converged || predictor.loo.unconverged_refits > 0;
        record.flags.jitter = predictor.fit.jitter.is_some();
        record.flags.degenerate_shrinkage = predictor.fit.degenerate_shrinkage;

        let band = predictor.band(config.alpha, Sidedness::TwoSided)?;
        let mut stream = substream(config.seed, replication, Purpose::Prediction);
        record.coverage = conditional_coverage(
            predictor.beta_hat(),
            &band,
            &ctx.design,
            &ctx.beta,
            config.sigma,
            config.prediction_draws,
            &mut stream,
        );
        record.lower_offset = band.lower;
        record.upper_offset = band.upper;
        record.scaled_length = band.width() / config.sigma;

        let error = instance.scaled_error(predictor.beta_hat());
        record.tau_hat = error.norm();
        record.lp_norm = lp_norm(&error, 2.0 + config.delta);
        if config.diagnostics.perturbation {
            record.perturbation_norm = perturbation_norm(
                spec,
                &instance.x,
                &instance.y,
                &instance.sigma_sqrt,
                instance.sigma,
            )?;
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        record.flags.failed = true;
        record.error = Some(e.to_string());
    }
    record
}

fn summarize(
    config: &ExperimentConfig,
    index: usize,
    spec: &EstimatorSpec,
    records: &[ReplicationRecord],
) -> Result<EstimatorSummary> {
    let name = spec.kind.to_string();
    let own: Vec<&ReplicationRecord> = records.iter().filter(|r| r.estimator == name).collect();
    let ok: Vec<&ReplicationRecord> = own
        .iter()
        .copied()
        .filter(|r| !r.flags.excluded())
        .collect();
    let column = |f: fn(&ReplicationRecord) -> f64| -> Vec<f64> {
        ok.iter().map(|r| f(r)).filter(|v| v.is_finite()).collect()
    };
    let target = 1.0 - config.alpha;
    let coverage = column(|r| r.coverage);
    let gaps: Vec<f64> = coverage.iter().map(|c| (c - target).abs()).collect();
    let taus = column(|r| r.tau_hat);
    let lengths = column(|r| r.scaled_length);
    let tau_hat = Summary::of(&taus);
    let scaled_length = Summary::of(&lengths);

    let oracle_length = if tau_hat.value.is_finite() {
        let mut stream = substream(config.seed, u64::MAX - index as u64, Purpose::Oracle);
        asymptotic_length_oracle(
            tau_hat.value,
            &config.design.l_dist,
            &config.design.u_dist,
            config.alpha,
            config.oracle_draws.max(20),
            &mut stream,
        )?
    } else {
        f64::NAN
    };
    let (n, p) = (config.design.n, config.design.p);
    let tau_reference =
        (matches!(spec.kind, EstimatorKind::Ols) && config.design.l_dist.is_constant() && p < n)
            .then(|| {
                let kappa = p as f64 / n as f64;
                (kappa / (1.0 - kappa)).sqrt()
            });

    Ok(EstimatorSummary {
        estimator: name,
        kind: spec.kind,
        replications: own.len(),
        failures: own.len() - ok.len(),
        coverage: Summary::of(&coverage),
        honesty_gap: Summary::of(&gaps),
        scaled_length,
        tau_hat,
        tau_iqr: interquartile_range(&taus),
        lp_norm: Summary::of(&column(|r| r.lp_norm)),
        perturbation_median: median(&column(|r| r.perturbation_norm)),
        oracle_length,
        length_relative_gap: (scaled_length.value - oracle_length).abs() / oracle_length,
        tau_reference,
    })
}

fn execute(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let design = config.realize_design()?;
    let beta = config.beta.realize(&design)?;
    let ctx = Context {
        config,
        design,
        beta,
    };
    let per_replication: Vec<(Vec<ReplicationRecord>, Option<SpectralRecord>)> =
        (0..config.replications as u64)
            .into_par_iter()
            .map(|r| {
                let instance =
                    ModelInstance::generate(&ctx.design, &ctx.beta, config.sigma, config.seed, r)?;
                let spectral = config.diagnostics.spectral.then(|| SpectralRecord {
                    replication: r,
                    diagnostics: spectral_diagnostics(&instance.x),
                });
                let records = config
                    .estimators
                    .iter()
                    .map(|spec| run_one(&ctx, spec, &instance, r))
                    .collect();
                Ok((records, spectral))
            })
            .collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(config.replications * config.estimators.len());
    let mut spectral = Vec::new();
    for (recs, spec) in per_replication {
        records.extend(recs);
        spectral.extend(spec);
    }
    let summaries = config
        .estimators
        .iter()
        .enumerate()
        .map(|(i, spec)| summarize(config, i, spec, &records))
        .collect::<Result<_>>()?;
    Ok(ExperimentReport {
        config: config.clone(),
        records,
        spectral,
        summaries,
    })
}

/// Runs every replication of `config` on `jobs` worker threads (all cores
/// when `None`). The report does not depend on the worker count.
pub fn run_experiment(config: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentReport> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("could not start worker pool: {e}")))?;
    pool.install(|| execute(config))
}

/// Honesty-gap experiment; an alias of [`run_experiment`] on all cores.
pub fn honesty_gap(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment(config, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthConvergence {
    pub estimator: String,
    pub mean_length: Summary,
    pub mean_tau: f64,
    pub oracle_length: f64,
    pub relative_gap: f64,
}

/// Mean scaled length against `ℓ_α(τ̂)` for every configured estimator.
pub fn length_convergence(config: &ExperimentConfig) -> Result<Vec<LengthConvergence>> {
    let report = run_experiment(config, None)?;
    Ok(report
        .summaries
        .iter()
        .map(|s| LengthConvergence {
            estimator: s.estimator.clone(),
            mean_length: s.scaled_length,
            mean_tau: s.tau_hat.value,
            oracle_length: s.oracle_length,
            relative_gap: s.length_relative_gap,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{DesignSpec, UDist};
    use crate::rng::Stream;
    use rand::SeedableRng;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn design(p: usize, u: UDist) -> Design {
        let mut spec = DesignSpec::gaussian(10, p);
        spec.u_dist = u;
        Design::new(spec).unwrap()
    }

    fn band(lower: f64, upper: f64) -> Band {
        Band {
            lower,
            upper,
            alpha: 0.1,
            sidedness: Sidedness::TwoSided,
        }
    }

    #[test]
    fn coverage_extremes() {
        let d = design(3, UDist::Normal);
        let beta = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let mut rng = Stream::seed_from_u64(1);
        let all = conditional_coverage(
            &beta,
            &band(f64::NEG_INFINITY, f64::INFINITY),
            &d,
            &beta,
            1.0,
            500,
            &mut rng,
        );
        assert_eq!(all, 1.0);
        let none = conditional_coverage(&beta, &band(0.0, 0.0), &d, &beta, 1.0, 500, &mut rng);
        assert_eq!(none, 0.0);
    }

    #[test]
    fn oracle_band_covers_at_nominal_level() {
        let d = design(3, UDist::Normal);
        let beta = DVector::from_vec(vec![1.0, -1.0, 0.5]);
        let z = Normal::standard().inverse_cdf(0.975);
        let mut rng = Stream::seed_from_u64(2);
        let cov = conditional_coverage(
            &beta,
            &band(-2.0 * z, 2.0 * z),
            &d,
            &beta,
            2.0,
            200_000,
            &mut rng,
        );
        // SE at M = 2e5 is 4.9e-4.
        assert!((cov - 0.95).abs() < 0.003, "{cov}");
    }

    #[test]
    fn widening_never_lowers_coverage() {
        let d = design(2, UDist::CenteredExponential);
        let beta = DVector::from_vec(vec![0.5, 0.5]);
        let bh = DVector::from_vec(vec![0.4, 0.7]);
        let mut last = 0.0;
        for w in [0.1, 0.5, 1.0, 2.0, 4.0] {
            let mut rng = Stream::seed_from_u64(3);
            let c = conditional_coverage(&bh, &band(-w, w), &d, &beta, 1.0, 5_000, &mut rng);
            assert!(c >= last);
            last = c;
        }
    }

    #[test]
    fn flags_round_trip() {
        let flags = RecordFlags {
            unconverged: true,
            discrete_errors: true,
            ..Default::default()
        };
        assert_eq!(flags.to_string(), "unconverged|discrete-errors");
        assert_eq!(RecordFlags::parse(&flags.to_string()), Some(flags));
        assert_eq!(RecordFlags::parse(""), Some(RecordFlags::default()));
        assert_eq!(RecordFlags::parse("bogus"), None);
    }

    #[test]
    fn median_band_runs_and_sits_near_half() {
        let mut config = ExperimentConfig::new(200, 10, vec![EstimatorSpec::ols()], 0.5, 10);
        config.prediction_draws = 2000;
        config.seed = 4;
        let report = run_experiment(&config, Some(2)).unwrap();
        let s = &report.summaries[0];
        assert_eq!(s.failures, 0);
        assert!(
            (s.coverage.value - 0.5).abs() < 0.05,
            "{}",
            s.coverage.value
        );
        assert!(s.honesty_gap.value >= 0.0 && s.honesty_gap.value <= 0.5);
        assert!(report
            .records
            .iter()
            .all(|r| (0.0..=1.0).contains(&r.coverage)));
    }

    #[test]
    fn scaled_length_is_scale_invariant_for_ols() {
        let mut config = ExperimentConfig::new(60, 20, vec![EstimatorSpec::ols()], 0.1, 3);
        config.prediction_draws = 50;
        config.beta = crate::dgp::BetaSpec::Dense { signal: 3.0 };
        let base = run_experiment(&config, Some(1)).unwrap();
        config.sigma = 7.0;
        let scaled = run_experiment(&config, Some(1)).unwrap();
        for (a, b) in base.records.iter().zip(&scaled.records) {
            assert!((a.scaled_length - b.scaled_length).abs() < 1e-9 * a.scaled_length);
            assert!((a.tau_hat - b.tau_hat).abs() < 1e-9);
        }
    }

    #[test]
    fn all_estimators_run_together() {
        let mut config = ExperimentConfig::new(
            40,
            8,
            vec![
                EstimatorSpec::ols(),
                EstimatorSpec::ridge(1.0),
                EstimatorSpec::lasso(0.05),
                EstimatorSpec::huber(1.345),
                EstimatorSpec::james_stein(0.5),
            ],
            0.2,
            2,
        );
        config.prediction_draws = 100;
        config.design.u_dist = UDist::TwoPoint;
        config.diagnostics.spectral = true;
        let report = run_experiment(&config, None).unwrap();
        assert_eq!(report.records.len(), 10);
        assert_eq!(report.spectral.len(), 2);
        assert!(report
            .records
            .iter()
            .all(|r| r.flags.discrete_errors && !r.flags.failed));
        assert!(report.over_budget().is_empty());
        assert_eq!(
            report.summary("ols").unwrap().tau_reference,
            Some((0.2f64 / 0.8).sqrt())
        );
    }
}
