//! Leave-one-out prediction intervals for linear regression with many
//! variables.
//!
//! The interval for a new response is the point forecast `x₀'β̂` plus the
//! empirical `α/2` and `1-α/2` quantiles of the leave-one-out residuals
//! `ũᵢ = yᵢ - xᵢ'β̂₍ᵢ₎`. It works for any estimator that is symmetric in the
//! observations and stable under deletion of one row, which covers least
//! squares, ridge, the LASSO, Huber M-estimation and James–Stein shrinkage.
//!
//! - [`dgp`]: elliptical design and response simulation
//! - [`estimators`]: the estimator suite
//! - [`intervals`]: leave-one-out residuals, quantiles and intervals
//! - [`validation`]: Monte Carlo coverage, length and random-matrix diagnostics
//! - [`cli`]: config-driven experiment runner and the `predict` command

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod intervals;
pub mod linalg;
pub mod rng;
pub mod validation;

pub use error::{Error, Result};
pub use estimators::{EstimatorKind, EstimatorSpec, FitResult};
pub use intervals::{LooPredictor, LooResiduals, PredictionInterval, Sidedness};
