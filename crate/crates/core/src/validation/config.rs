use serde::{Deserialize, Serialize};

use crate::dgp::{BetaSpec, Design, DesignSpec};
use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;

fn default_sigma() -> f64 {
    1.0
}
fn default_prediction_draws() -> usize {
    2000
}
fn default_delta() -> f64 {
    2.0
}
fn default_failure_budget() -> f64 {
    0.05
}
fn default_oracle_draws() -> usize {
    200_000
}
fn default_true() -> bool {
    true
}

/// Optional per-replication diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsToggle {
    /// Refit without the first row and record the scaled coefficient change.
    #[serde(default = "default_true")]
    pub perturbation: bool,
    /// Singular values of X: trace of the pseudo-inverse powers and λ_min(X'X/n).
    #[serde(default)]
    pub spectral: bool,
}

impl Default for DiagnosticsToggle {
    fn default() -> Self {
        DiagnosticsToggle {
            perturbation: true,
            spectral: false,
        }
    }
}

/// One simulation experiment: a design, a parameter point and the estimators to compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub alpha: f64,
    /// Training replications `R`.
    pub replications: usize,
    /// Fresh prediction draws `M` per training set.
    #[serde(default = "default_prediction_draws")]
    pub prediction_draws: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Moment order offset for the `ℓ_{2+δ}` diagnostic.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Fraction of replications allowed to fail per estimator.
    #[serde(default = "default_failure_budget")]
    pub failure_budget: f64,
    /// Draws for the asymptotic length reference when no closed form applies.
    #[serde(default = "default_oracle_draws")]
    pub oracle_draws: usize,
    pub design: DesignSpec,
    #[serde(default = "default_beta")]
    pub beta: BetaSpec,
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default)]
    pub diagnostics: DiagnosticsToggle,
}

fn default_beta() -> BetaSpec {
    BetaSpec::Zero
}

impl ExperimentConfig {
    /// Minimal configuration: Gaussian design, `β = 0`, `σ = 1`.
    pub fn new(
        n: usize,
        p: usize,
        estimators: Vec<EstimatorSpec>,
        alpha: f64,
        replications: usize,
    ) -> Self {
        ExperimentConfig {
            seed: 0,
            alpha,
            replications,
            prediction_draws: default_prediction_draws(),
            sigma: 1.0,
            delta: default_delta(),
            failure_budget: default_failure_budget(),
            oracle_draws: default_oracle_draws(),
            design: DesignSpec::gaussian(n, p),
            beta: BetaSpec::Zero,
            estimators,
            diagnostics: DiagnosticsToggle::default(),
        }
    }

    /// Parses a TOML document and validates it.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(
                "alpha",
                format!("must lie in (0, 1), got {}", self.alpha),
            ));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications", "must be at least 1"));
        }
        if self.prediction_draws == 0 {
            return Err(Error::invalid("prediction_draws", "must be at least 1"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(
                "sigma",
                format!("must be positive, got {}", self.sigma),
            ));
        }
        if !(self.delta > 0.0 && self.delta <= 2.0) {
            return Err(Error::invalid(
                "delta",
                format!("must lie in (0, 2], got {}", self.delta),
            ));
        }
        if !(0.0..=1.0).contains(&self.failure_budget) {
            return Err(Error::invalid(
                "failure_budget",
                format!("must lie in [0, 1], got {}", self.failure_budget),
            ));
        }
        if self.oracle_draws == 0 {
            return Err(Error::invalid("oracle_draws", "must be at least 1"));
        }
        if self.design.n < 2 {
            return Err(Error::invalid(
                "design.n",
                "leave-one-out needs at least 2 observations",
            ));
        }
        if self.estimators.is_empty() {
            return Err(Error::invalid(
                "estimators",
                "at least one estimator is required",
            ));
        }
        for (i, spec) in self.estimators.iter().enumerate() {
            spec.validate().map_err(|e| match e {
                Error::InvalidParameter { field, reason } => {
                    Error::invalid(format!("estimators[{i}].{field}"), reason)
                }
                other => other,
            })?;
        }
        self.design.validate()?;
        Ok(())
    }

    pub fn realize_design(&self) -> Result<Design> {
        Design::new(self.design.clone())
    }
}
