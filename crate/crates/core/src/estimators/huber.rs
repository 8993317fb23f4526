use nalgebra::{DMatrix, DVector};

use super::{EstimatorSpec, FitResult};
use crate::error::{Error, Result};
use crate::linalg::ThinSvd;

/// Huber loss: `r²/2` on `|r| <= k`, `k|r| - k²/2` outside.
pub fn huber_loss(r: f64, k: f64) -> f64 {
    let a = r.abs();
    if a <= k {
        0.5 * r * r
    } else {
        k * a - 0.5 * k * k
    }
}

fn objective(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>, k: f64) -> f64 {
    (y - x * b).iter().map(|&r| huber_loss(r, k)).sum()
}

/// Iteratively reweighted least squares with weights `min(1, k/|r|)`.
///
/// Each step minimizes a quadratic majorizer of the Huber objective, so the
/// objective never increases.
pub(super) fn fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    k: f64,
    spec: &EstimatorSpec,
    start: Option<&DVector<f64>>,
) -> Result<FitResult> {
    let (n, p) = x.shape();
    let mut beta = match start {
        Some(b) => b.clone(),
        None => ThinSvd::new(x).pinv_solve(y),
    };
    let mut current = objective(x, y, &beta, k);
    let mut history = vec![current];
    let mut jitter: Option<f64> = None;
    let mut iterations = 0;
    let mut converged = false;

    let mut weighted = DMatrix::zeros(n, p);
    let mut weighted_y = DVector::zeros(n);
    while iterations < spec.max_iterations {
        iterations += 1;
        let resid = y - x * &beta;
        for i in 0..n {
            let a = resid[i].abs();
            let w = if a <= k { 1.0 } else { k / a };
            let sw = w.sqrt();
            for j in 0..p {
                weighted[(i, j)] = sw * x[(i, j)];
            }
            weighted_y[i] = sw * y[i];
        }
        let mut gram = weighted.tr_mul(&weighted);
        let rhs = weighted.tr_mul(&weighted_y);
        let next = match gram.clone().cholesky() {
            Some(chol) => chol.solve(&rhs),
            None => {
                let mut amount = 1e-10 * gram.trace().max(f64::MIN_POSITIVE);
                let solved = loop {
                    for j in 0..p {
                        gram[(j, j)] += amount;
                    }
                    if let Some(chol) = gram.clone().cholesky() {
                        break chol.solve(&rhs);
                    }
                    amount *= 10.0;
                    if !amount.is_finite() {
                        return Err(Error::invalid(
                            "huber",
                            "weighted system could not be regularized",
                        ));
                    }
                };
                jitter = Some(jitter.map_or(amount, |j: f64| j.max(amount)));
                solved
            }
        };
        let change = (&next - &beta).amax();
        let next_objective = objective(x, y, &next, k);
        // Rounding can produce a step that is worse by an ulp near the optimum.
        if next_objective > current && change <= spec.tolerance {
            converged = true;
            break;
        }
        beta = next;
        current = next_objective;
        history.push(current);
        if change <= spec.tolerance {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        beta_hat: beta,
        iterations,
        converged,
        objective: Some(current),
        kkt_residual: None,
        jitter,
        degenerate_shrinkage: false,
        objective_history: history,
    })
}
