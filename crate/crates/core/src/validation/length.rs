//! Asymptotic scaled length `ℓ_α(τ)`: the inter-quantile range of `l₀Nτ + u₀`
//! with `N` standard normal and independent of `(l₀, u₀)`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dgp::{LDist, UDist};
use crate::error::{Error, Result};
use crate::intervals::empirical_quantile;
use crate::rng::{substream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    /// `2 z_{1-α/2} √(1+τ²)` for `l ≡ 1` and normal errors.
    ClosedForm,
    /// Bisection on the exact mixture cdf (discrete `l`, normal or two-point `u`).
    NumericMixture,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthOracle {
    pub length: f64,
    /// Zero for the deterministic methods.
    pub std_error: f64,
    pub method: OracleMethod,
}

const MC_BATCHES: usize = 20;

fn mixture_atoms(l_dist: &LDist) -> Option<Vec<(f64, f64)>> {
    match l_dist {
        LDist::Constant => Some(vec![(1.0, 1.0)]),
        LDist::TwoPoint { values, probs } => {
            Some(vec![(values[0], probs[0]), (values[1], probs[1])])
        }
        LDist::ScaledUniform { .. } => None,
    }
}

/// `P(l N τ + u <= t)` for discrete `l` and normal or two-point `u`.
fn mixture_cdf(t: f64, tau: f64, atoms: &[(f64, f64)], u_dist: &UDist, normal: &Normal) -> f64 {
    atoms
        .iter()
        .map(|&(l, weight)| {
            let spread = l.abs() * tau;
            let inner = match u_dist {
                UDist::Normal => normal.cdf(t / (spread * spread + 1.0).sqrt()),
                UDist::TwoPoint => [-1.0, 1.0]
                    .iter()
                    .map(|&s| {
                        let value = if spread > 0.0 {
                            normal.cdf((t - s) / spread)
                        } else if t >= s {
                            1.0
                        } else {
                            0.0
                        };
                        0.5 * value
                    })
                    .sum(),
                _ => unreachable!("mixture_cdf called with unsupported error law"),
            };
            weight * inner
        })
        .sum()
}

/// `inf{t : F(t) >= q}` by bisection.
fn mixture_quantile(
    q: f64,
    tau: f64,
    atoms: &[(f64, f64)],
    u_dist: &UDist,
    normal: &Normal,
) -> f64 {
    let l_max = atoms.iter().map(|a| a.0.abs()).fold(0.0, f64::max);
    let reach = 1.0 + 40.0 * (1.0 + l_max * tau);
    let (mut lo, mut hi) = (-reach, reach);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mixture_cdf(mid, tau, atoms, u_dist, normal) >= q {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * hi.abs().max(1.0) {
            break;
        }
    }
    hi
}

fn empirical_range(sample: &[f64], alpha: f64) -> f64 {
    empirical_quantile(sample, 1.0 - alpha / 2.0).expect("non-empty")
        - empirical_quantile(sample, alpha / 2.0).expect("non-empty")
}

/// Asymptotic length with the method used and its Monte Carlo error.
pub fn length_oracle_detail<R: Rng + ?Sized>(
    tau: f64,
    l_dist: &LDist,
    u_dist: &UDist,
    alpha: f64,
    draws: usize,
    rng: &mut R,
) -> Result<LengthOracle> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::invalid(
            "tau",
            format!("must be non-negative, got {tau}"),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(
            "alpha",
            format!("must lie in (0, 1), got {alpha}"),
        ));
    }
    l_dist.validate()?;
    u_dist.validate()?;
    let normal = Normal::standard();
    if l_dist.is_constant() && matches!(u_dist, UDist::Normal) {
        let z = normal.inverse_cdf(1.0 - alpha / 2.0);
        return Ok(LengthOracle {
            length: 2.0 * z * (1.0 + tau * tau).sqrt(),
            std_error: 0.0,
            method: OracleMethod::ClosedForm,
        });
    }
    if matches!(u_dist, UDist::Normal | UDist::TwoPoint) {
        if let Some(atoms) = mixture_atoms(l_dist) {
            let upper = mixture_quantile(1.0 - alpha / 2.0, tau, &atoms, u_dist, &normal);
            let lower = mixture_quantile(alpha / 2.0, tau, &atoms, u_dist, &normal);
            return Ok(LengthOracle {
                length: upper - lower,
                std_error: 0.0,
                method: OracleMethod::NumericMixture,
            });
        }
    }
    if draws < MC_BATCHES {
        return Err(Error::invalid(
            "draws",
            format!("need at least {MC_BATCHES} Monte Carlo draws"),
        ));
    }
    let sample: Vec<f64> = (0..draws)
        .map(|_| {
            let l = l_dist.sample(rng);
            let n: f64 = StandardNormal.sample(rng);
            l * n * tau + u_dist.sample(rng)
        })
        .collect();
    let length = empirical_range(&sample, alpha);
    // Batch means: the full-sample error is the batch spread over √batches.
    let batch = draws / MC_BATCHES;
    let ranges: Vec<f64> = sample
        .chunks_exact(batch)
        .take(MC_BATCHES)
        .map(|c| empirical_range(c, alpha))
        .collect();
    let std_error = super::stats::std_error(&ranges) / (MC_BATCHES as f64).sqrt();
    Ok(LengthOracle {
        length,
        std_error,
        method: OracleMethod::MonteCarlo,
    })
}

/// `ℓ_α(τ)`, closed form where available and numeric or Monte Carlo otherwise.
pub fn asymptotic_length_oracle<R: Rng + ?Sized>(
    tau: f64,
    l_dist: &LDist,
    u_dist: &UDist,
    alpha: f64,
    draws: usize,
    rng: &mut R,
) -> Result<f64> {
    length_oracle_detail(tau, l_dist, u_dist, alpha, draws, rng).map(|o| o.length)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub tau: f64,
    pub length: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthScan {
    pub points: Vec<ScanPoint>,
    /// Indices `k` where `ℓ(τ_{k+1})` falls below `ℓ(τ_k)` by more than three
    /// combined standard errors.
    pub decreasing_pairs: Vec<usize>,
}

impl LengthScan {
    pub fn is_monotone(&self) -> bool {
        self.decreasing_pairs.is_empty()
    }
}

/// Evaluates `τ ↦ ℓ_α(τ)` on a grid and flags significant decreases.
pub fn length_monotonicity_scan(
    l_dist: &LDist,
    u_dist: &UDist,
    alpha: f64,
    tau_grid: &[f64],
    draws: usize,
    seed: u64,
) -> Result<LengthScan> {
    let points = tau_grid
        .iter()
        .enumerate()
        .map(|(k, &tau)| {
            let mut rng = substream(seed, k as u64, Purpose::Oracle);
            let o = length_oracle_detail(tau, l_dist, u_dist, alpha, draws, &mut rng)?;
            Ok(ScanPoint {
                tau,
                length: o.length,
                std_error: o.std_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let decreasing_pairs = points
        .windows(2)
        .enumerate()
        .filter(|(_, w)| {
            let noise = 3.0 * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
            let floor = 1e-9 * w[0].length.abs().max(1.0);
            w[0].length - w[1].length > noise.max(floor)
        })
        .map(|(k, _)| k)
        .collect();
    Ok(LengthScan {
        points,
        decreasing_pairs,
    })
}
