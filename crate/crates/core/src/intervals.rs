//! Leave-one-out residuals, empirical quantiles and prediction intervals.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    closed_form_fit, fit, fit_on_subset_from, EstimatorKind, EstimatorSpec, FitResult,
};
use crate::linalg::ThinSvd;

/// Smallest `k ∈ 1..=m` with `k/m >= t`, i.e. `⌈mt⌉` without the rounding
/// surprises of computing `m * t` directly.
pub fn quantile_rank(m: usize, t: f64) -> usize {
    let mf = m as f64;
    let mut k = ((mf * t).ceil() as usize).clamp(1, m);
    while k > 1 && (k - 1) as f64 / mf >= t {
        k -= 1;
    }
    while k < m && (k as f64) / mf < t {
        k += 1;
    }
    k
}

fn check_level(t: f64) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            "t",
            format!("quantile level must lie in (0, 1], got {t}"),
        ))
    }
}

/// Generalized inverse of the empirical cdf, `inf{u : F̂(u) >= t}`: the
/// `⌈mt⌉`-th order statistic. No interpolation.
pub fn empirical_quantile(sample: &[f64], t: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    check_level(t)?;
    if sample.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("sample", "contains NaN"));
    }
    let k = quantile_rank(sample.len(), t);
    let mut buf = sample.to_vec();
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LooMethod {
    BruteForce,
    HatShortcut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LooResiduals {
    pub values: Vec<f64>,
    pub method: LooMethod,
    pub spec: EstimatorSpec,
    /// Refits that hit the iteration cap (iterative estimators only).
    pub unconverged_refits: usize,
}

/// `ũᵢ = yᵢ - xᵢ'β̂₍ᵢ₎` by refitting without each row.
///
/// Iterative estimators warm-start every refit from the full-data fit.
pub fn loo_residuals_generic(
    spec: &EstimatorSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<LooResiduals> {
    let full = fit(spec, x, y)?;
    loo_residuals_generic_from(spec, x, y, &full)
}

fn loo_residuals_generic_from(
    spec: &EstimatorSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    full: &FitResult,
) -> Result<LooResiduals> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::invalid(
            "n",
            format!("leave-one-out needs at least 2 observations, got {n}"),
        ));
    }
    let warm = spec.kind.is_iterative().then_some(&full.beta_hat);
    let refits: Vec<(f64, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let refit = fit_on_subset_from(spec, x, y, &[i], warm).map_err(|e| Error::Refit {
                index: i,
                source: Box::new(e),
            })?;
            let prediction = x.row(i).transpose().dot(&refit.beta_hat);
            Ok((y[i] - prediction, refit.converged))
        })
        .collect::<Result<_>>()?;
    Ok(LooResiduals {
        values: refits.iter().map(|r| r.0).collect(),
        method: LooMethod::BruteForce,
        spec: *spec,
        unconverged_refits: refits.iter().filter(|r| !r.1).count(),
    })
}

/// Minimum admissible `1 - hᵢ`.
pub const LEVERAGE_GUARD: f64 = 1e-12;

/// `ũᵢ = ûᵢ / (1 - hᵢ)` from a single decomposition, for least squares on a
/// full-column-rank design and for ridge.
pub fn loo_residuals_hat_shortcut(
    spec: &EstimatorSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<LooResiduals> {
    shortcut_with_fit(spec, x, y).map(|(_, loo)| loo)
}

/// Closed-form fit and shortcut residuals from the same decomposition.
fn shortcut_with_fit(
    spec: &EstimatorSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<(DVector<f64>, LooResiduals)> {
    spec.validate()?;
    let (n, p) = x.shape();
    if n < 2 {
        return Err(Error::invalid(
            "n",
            format!("leave-one-out needs at least 2 observations, got {n}"),
        ));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            what: "response",
            expected: n,
            found: y.len(),
        });
    }
    let svd = ThinSvd::new(x);
    let (beta, (resid, complement)) = match spec.kind {
        EstimatorKind::Ols => {
            let rank = svd.rank();
            if rank < p {
                return Err(Error::SingularDesign { rank, p });
            }
            (svd.pinv_solve(y), svd.smoother_residuals(y, |_| 1.0))
        }
        EstimatorKind::Ridge { lambda } => (
            svd.filtered_solve(y, |s| s / (s * s + lambda)),
            svd.smoother_residuals(y, |s| s * s / (s * s + lambda)),
        ),
        other => {
            return Err(Error::invalid(
                "estimator",
                format!(
                    "the hat-matrix shortcut applies to ols and ridge only, not {}",
                    other.name()
                ),
            ))
        }
    };
    let values = resid
        .iter()
        .zip(complement.iter())
        .enumerate()
        .map(|(index, (&r, &c))| {
            if c < LEVERAGE_GUARD {
                Err(Error::DegenerateLeverage {
                    index,
                    leverage: 1.0 - c,
                })
            } else {
                Ok(r / c)
            }
        })
        .collect::<Result<_>>()?;
    let loo = LooResiduals {
        values,
        method: LooMethod::HatShortcut,
        spec: *spec,
        unconverged_refits: 0,
    };
    Ok((beta, loo))
}

/// Hat shortcut when it applies, brute force otherwise.
pub fn loo_residuals(
    spec: &EstimatorSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<LooResiduals> {
    match spec.kind {
        EstimatorKind::Ridge { .. } => loo_residuals_hat_shortcut(spec, x, y),
        EstimatorKind::Ols => match loo_residuals_hat_shortcut(spec, x, y) {
            Err(Error::SingularDesign { .. }) | Err(Error::DegenerateLeverage { .. }) => {
                loo_residuals_generic(spec, x, y)
            }
            other => other,
        },
        _ => loo_residuals_generic(spec, x, y),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    #[default]
    TwoSided,
    /// `[x₀'β̂ + q̃_α, ∞)`.
    LowerOnly,
    /// `(-∞, x₀'β̂ + q̃_{1-α}]`.
    UpperOnly,
}

/// Residual offsets of an interval, independent of the feature vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub sidedness: Sidedness,
}

impl Band {
    pub fn from_residuals(residuals: &[f64], alpha: f64, sidedness: Sidedness) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(
                "alpha",
                format!("must lie in (0, 1), got {alpha}"),
            ));
        }
        let m = residuals.len();
        if m == 0 {
            return Err(Error::EmptySample);
        }
        let recommended = (2.0 / alpha).ceil();
        if (m as f64) < recommended {
            log::warn!(
                "only {m} residuals for alpha = {alpha}; at least {recommended} recommended"
            );
        }
        let (lower, upper) = match sidedness {
            Sidedness::TwoSided => (
                empirical_quantile(residuals, alpha / 2.0)?,
                empirical_quantile(residuals, 1.0 - alpha / 2.0)?,
            ),
            Sidedness::LowerOnly => (empirical_quantile(residuals, alpha)?, f64::INFINITY),
            Sidedness::UpperOnly => (
                f64::NEG_INFINITY,
                empirical_quantile(residuals, 1.0 - alpha)?,
            ),
        };
        Ok(Band {
            lower,
            upper,
            alpha,
            sidedness,
        })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn around(&self, point: f64) -> PredictionInterval {
        PredictionInterval {
            lower: point + self.lower,
            upper: point + self.upper,
            alpha: self.alpha,
            point,
            sidedness: self.sidedness,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub point: f64,
    pub sidedness: Sidedness,
}

impl PredictionInterval {
    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }
}

/// `[x₀'β̂ + q̃_{α/2}, x₀'β̂ + q̃_{1-α/2}]` (or its one-sided analogue).
pub fn build_interval(
    x0: &DVector<f64>,
    beta_hat: &DVector<f64>,
    loo: &LooResiduals,
    alpha: f64,
    sidedness: Sidedness,
) -> Result<PredictionInterval> {
    if x0.len() != beta_hat.len() {
        return Err(Error::DimensionMismatch {
            what: "x0",
            expected: beta_hat.len(),
            found: x0.len(),
        });
    }
    let band = Band::from_residuals(&loo.values, alpha, sidedness)?;
    Ok(band.around(x0.dot(beta_hat)))
}

/// A fitted estimator together with its leave-one-out residuals.
#[derive(Debug, Clone)]
pub struct LooPredictor {
    pub fit: FitResult,
    pub loo: LooResiduals,
}

impl LooPredictor {
    pub fn fit(spec: &EstimatorSpec, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        if let EstimatorKind::Ols | EstimatorKind::Ridge { .. } = spec.kind {
            match shortcut_with_fit(spec, x, y) {
                Ok((beta, loo)) => {
                    let full = closed_form_fit(spec, x, y, beta);
                    return Ok(LooPredictor { fit: full, loo });
                }
                Err(Error::SingularDesign { .. }) | Err(Error::DegenerateLeverage { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        let full = fit(spec, x, y)?;
        let loo = loo_residuals_generic_from(spec, x, y, &full)?;
        Ok(LooPredictor { fit: full, loo })
    }

    pub fn beta_hat(&self) -> &DVector<f64> {
        &self.fit.beta_hat
    }

    pub fn band(&self, alpha: f64, sidedness: Sidedness) -> Result<Band> {
        Band::from_residuals(&self.loo.values, alpha, sidedness)
    }

    pub fn interval(
        &self,
        x0: &DVector<f64>,
        alpha: f64,
        sidedness: Sidedness,
    ) -> Result<PredictionInterval> {
        build_interval(x0, &self.fit.beta_hat, &self.loo, alpha, sidedness)
    }
}

/// Sample-splitting interval: fit on the first `⌈νn⌉` rows, take quantiles of
/// the residuals on the remaining rows.
pub fn build_split_interval(
    spec: &EstimatorSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    x0: &DVector<f64>,
    nu: f64,
    alpha: f64,
    sidedness: Sidedness,
) -> Result<PredictionInterval> {
    let n = x.nrows();
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Error::invalid(
            "nu",
            format!("must lie in (0, 1), got {nu}"),
        ));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            what: "response",
            expected: n,
            found: y.len(),
        });
    }
    if x0.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            what: "x0",
            expected: x.ncols(),
            found: x0.len(),
        });
    }
    let train = if n == 0 { 0 } else { quantile_rank(n, nu) };
    let holdout = n - train;
    if train == 0 || holdout == 0 {
        return Err(Error::DegenerateSplit { train, holdout });
    }
    if holdout == 1 {
        log::warn!("split leaves a single holdout row; the band has zero width");
    }
    let fitted = fit(
        spec,
        &x.rows(0, train).into_owned(),
        &y.rows(0, train).into_owned(),
    )?;
    let resid: Vec<f64> = (train..n)
        .map(|i| y[i] - x.row(i).transpose().dot(&fitted.beta_hat))
        .collect();
    let band = Band::from_residuals(&resid, alpha, sidedness)?;
    Ok(band.around(x0.dot(&fitted.beta_hat)))
}
