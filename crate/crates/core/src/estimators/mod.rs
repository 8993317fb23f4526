//! Linear coefficient estimators behind one fitting interface.
//!
//! None of the estimators fit an intercept; the model has centered features.

mod huber;
mod lasso;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{drop_entries, drop_rows, ThinSvd};

pub use huber::huber_loss;

pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EstimatorKind {
    Ols,
    Ridge {
        lambda: f64,
    },
    /// Minimizes `‖Y - Xb‖²/(2n) + λ‖b‖₁`.
    Lasso {
        lambda: f64,
    },
    Huber {
        k: f64,
    },
    JamesStein {
        c: f64,
    },
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Ols => "ols",
            EstimatorKind::Ridge { .. } => "ridge",
            EstimatorKind::Lasso { .. } => "lasso",
            EstimatorKind::Huber { .. } => "huber",
            EstimatorKind::JamesStein { .. } => "james-stein",
        }
    }

    pub fn is_iterative(&self) -> bool {
        matches!(
            self,
            EstimatorKind::Lasso { .. } | EstimatorKind::Huber { .. }
        )
    }

    fn validate(&self) -> Result<()> {
        let (field, value) = match *self {
            EstimatorKind::Ols => return Ok(()),
            EstimatorKind::Ridge { lambda } | EstimatorKind::Lasso { lambda } => ("lambda", lambda),
            EstimatorKind::Huber { k } => ("k", k),
            EstimatorKind::JamesStein { c } => ("c", c),
        };
        if value > 0.0 && value.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(
                format!("{}.{field}", self.name()),
                format!("must be positive and finite, got {value}"),
            ))
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorKind::Ols => write!(f, "ols"),
            EstimatorKind::Ridge { lambda } => write!(f, "ridge[lambda={lambda}]"),
            EstimatorKind::Lasso { lambda } => write!(f, "lasso[lambda={lambda}]"),
            EstimatorKind::Huber { k } => write!(f, "huber[k={k}]"),
            EstimatorKind::JamesStein { c } => write!(f, "james-stein[c={c}]"),
        }
    }
}

fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

/// An estimator choice plus solver controls for the iterative kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    #[serde(flatten)]
    pub kind: EstimatorKind,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Convergence threshold on the max-abs coefficient change per iteration.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl From<EstimatorKind> for EstimatorSpec {
    fn from(kind: EstimatorKind) -> Self {
        EstimatorSpec {
            kind,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

impl EstimatorSpec {
    pub fn ols() -> Self {
        EstimatorKind::Ols.into()
    }
    pub fn ridge(lambda: f64) -> Self {
        EstimatorKind::Ridge { lambda }.into()
    }
    pub fn lasso(lambda: f64) -> Self {
        EstimatorKind::Lasso { lambda }.into()
    }
    pub fn huber(k: f64) -> Self {
        EstimatorKind::Huber { k }.into()
    }
    pub fn james_stein(c: f64) -> Self {
        EstimatorKind::JamesStein { c }.into()
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations", "must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid(
                "tolerance",
                format!("must be positive, got {}", self.tolerance),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta_hat: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective: Option<f64>,
    /// Largest KKT violation (lasso only).
    pub kkt_residual: Option<f64>,
    /// Diagonal jitter added to a singular weighted system (huber only).
    pub jitter: Option<f64>,
    /// James–Stein with `Xβ̂_LS = 0`: the shrinkage factor is undefined and zero is returned.
    pub degenerate_shrinkage: bool,
    /// Objective after each iteration (huber only).
    pub objective_history: Vec<f64>,
}

impl FitResult {
    fn closed_form(beta_hat: DVector<f64>, objective: Option<f64>) -> Self {
        FitResult {
            beta_hat,
            iterations: 1,
            converged: true,
            objective,
            kkt_residual: None,
            jitter: None,
            degenerate_shrinkage: false,
            objective_history: Vec::new(),
        }
    }
}

fn check_data(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::EmptySample);
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "response",
            expected: x.nrows(),
            found: y.len(),
        });
    }
    Ok(())
}

/// Fits `spec` on `(X, Y)`.
pub fn fit(spec: &EstimatorSpec, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<FitResult> {
    fit_from(spec, x, y, None)
}

/// Like [`fit`], but iterative estimators start from `start` when given.
pub fn fit_from(
    spec: &EstimatorSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    start: Option<&DVector<f64>>,
) -> Result<FitResult> {
    spec.validate()?;
    check_data(x, y)?;
    if let Some(b) = start {
        if b.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                what: "warm start",
                expected: x.ncols(),
                found: b.len(),
            });
        }
    }
    match spec.kind {
        EstimatorKind::Ols => Ok(fit_ols(x, y)),
        EstimatorKind::Ridge { lambda } => Ok(fit_ridge(x, y, lambda)),
        EstimatorKind::Lasso { lambda } => Ok(lasso::fit(x, y, lambda, spec, start)),
        EstimatorKind::Huber { k } => huber::fit(x, y, k, spec, start),
        EstimatorKind::JamesStein { c } => Ok(fit_james_stein(x, y, c)),
    }
}

/// Fits on all rows except `excluded` (duplicates ignored).
pub fn fit_on_subset(
    spec: &EstimatorSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    excluded: &[usize],
) -> Result<FitResult> {
    fit_on_subset_from(spec, x, y, excluded, None)
}

pub fn fit_on_subset_from(
    spec: &EstimatorSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    excluded: &[usize],
    start: Option<&DVector<f64>>,
) -> Result<FitResult> {
    check_data(x, y)?;
    let n = x.nrows();
    let mut set: Vec<usize> = excluded.to_vec();
    set.sort_unstable();
    set.dedup();
    if let Some(&bad) = set.iter().find(|&&i| i >= n) {
        return Err(Error::invalid(
            "excluded_indices",
            format!("index {bad} out of range for n = {n}"),
        ));
    }
    if set.len() >= n {
        return Err(Error::EmptySample);
    }
    if set.is_empty() {
        return fit_from(spec, x, y, start);
    }
    fit_from(spec, &drop_rows(x, &set), &drop_entries(y, &set), start)
}

fn residual_sq(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (y - x * b).norm_squared()
}

/// Wraps an OLS or ridge coefficient vector computed elsewhere.
pub(crate) fn closed_form_fit(
    spec: &EstimatorSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: DVector<f64>,
) -> FitResult {
    let penalty = match spec.kind {
        EstimatorKind::Ridge { lambda } => lambda * beta.norm_squared(),
        _ => 0.0,
    };
    let objective = residual_sq(x, y, &beta) + penalty;
    FitResult::closed_form(beta, Some(objective))
}

/// Moore–Penrose least squares `(X'X)^† X'Y`.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> FitResult {
    let beta = ThinSvd::new(x).pinv_solve(y);
    let objective = residual_sq(x, y, &beta);
    FitResult::closed_form(beta, Some(objective))
}

/// `(X'X + λI)^{-1} X'Y`.
pub fn fit_ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> FitResult {
    let beta = ThinSvd::new(x).filtered_solve(y, |s| s / (s * s + lambda));
    let objective = residual_sq(x, y, &beta) + lambda * beta.norm_squared();
    FitResult::closed_form(beta, Some(objective))
}

/// `(1 - cp / β̂'X'Xβ̂) β̂` with `β̂` the least-squares fit.
pub fn fit_james_stein(x: &DMatrix<f64>, y: &DVector<f64>, c: f64) -> FitResult {
    let ls = ThinSvd::new(x).pinv_solve(y);
    let fitted_sq = (x * &ls).norm_squared();
    if fitted_sq <= f64::EPSILON * y.norm_squared() {
        let mut result = FitResult::closed_form(DVector::zeros(x.ncols()), None);
        result.degenerate_shrinkage = true;
        return result;
    }
    let factor = 1.0 - c * x.ncols() as f64 / fitted_sq;
    FitResult::closed_form(ls * factor, None)
}
