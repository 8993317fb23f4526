//! Dense linear algebra helpers shared by the estimators and diagnostics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Thin singular value decomposition `X = U diag(s) V'` with the
/// Moore–Penrose rank cutoff `eps * max(n, p) * s_max`.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
    pub cutoff: f64,
}

impl ThinSvd {
    /// Computed as a QR factorization followed by the SVD of the square
    /// triangular factor (of `X` when `n >= p`, of `X'` otherwise).
    pub fn new(x: &DMatrix<f64>) -> Self {
        let (n, p) = x.shape();
        let (u, singular_values, v_t) = if n >= p {
            let qr = x.clone().qr();
            let (q, r) = (qr.q(), qr.r());
            let (u_r, s, v_t) = checked_svd(&r);
            (q * u_r, s, v_t)
        } else {
            let qr = x.transpose().qr();
            let (q, r) = (qr.q(), qr.r());
            let (u_r, s, v_t_r) = checked_svd(&r);
            (v_t_r.transpose(), s, (q * u_r).transpose())
        };
        let s_max = singular_values.iter().copied().fold(0.0, f64::max);
        let cutoff = f64::EPSILON * n.max(p) as f64 * s_max;
        ThinSvd {
            u,
            singular_values,
            v_t,
            cutoff,
        }
    }

    pub fn rank(&self) -> usize {
        self.singular_values
            .iter()
            .filter(|&&s| s > self.cutoff)
            .count()
    }

    /// `V diag(f(s_k)) U' y`, summing only over components above the cutoff.
    pub fn filtered_solve(&self, y: &DVector<f64>, filter: impl Fn(f64) -> f64) -> DVector<f64> {
        let mut coef = self.u.tr_mul(y);
        for (c, &s) in coef.iter_mut().zip(self.singular_values.iter()) {
            *c = if s > self.cutoff { *c * filter(s) } else { 0.0 };
        }
        self.v_t.tr_mul(&coef)
    }

    /// Minimum-norm least-squares solution `X^† y`.
    pub fn pinv_solve(&self, y: &DVector<f64>) -> DVector<f64> {
        self.filtered_solve(y, |s| 1.0 / s)
    }

    /// Diagonal of `U diag(g(s_k)) U'`.
    pub fn weighted_leverages(&self, g: impl Fn(f64) -> f64) -> DVector<f64> {
        let weights = self.filter_weights(g);
        DVector::from_fn(self.u.nrows(), |i, _| {
            self.u
                .row(i)
                .iter()
                .zip(&weights)
                .map(|(uik, w)| uik * uik * w)
                .sum()
        })
    }

    /// Residuals `e_i'(I - H)y` and diagonal `e_i'(I - H)e_i` of the smoother
    /// `H = U diag(w) U'` with `w_k = g(s_k)`, computed without cancellation.
    ///
    /// Rows whose distance from the retained left singular subspace is small
    /// (leverage near one) use `q = (I - UU')e_i`, formed with one
    /// reorthogonalization pass, for both quantities.
    pub fn smoother_residuals(
        &self,
        y: &DVector<f64>,
        g: impl Fn(f64) -> f64,
    ) -> (DVector<f64>, DVector<f64>) {
        let weights = self.filter_weights(g);
        let kept: Vec<usize> = (0..weights.len())
            .filter(|&k| self.singular_values[k] > self.cutoff)
            .collect();
        let coeffs = self.u.tr_mul(y);
        let fitted = &self.u * DVector::from_fn(weights.len(), |k, _| weights[k] * coeffs[k]);
        let n = self.u.nrows();
        let mut resid = y - fitted;
        let mut diag = DVector::zeros(n);
        for i in 0..n {
            let (mut inside, mut shrink) = (0.0, 0.0);
            for &k in &kept {
                let sq = self.u[(i, k)] * self.u[(i, k)];
                inside += sq;
                shrink += sq * (1.0 - weights[k]);
            }
            let mut outside = 1.0 - inside;
            if outside < 1e-2 {
                let q = self.complement_of_unit(i, &kept);
                outside = q.norm_squared();
                let shrunk: f64 = kept
                    .iter()
                    .map(|&k| self.u[(i, k)] * (1.0 - weights[k]) * coeffs[k])
                    .sum();
                resid[i] = q.dot(y) + shrunk;
            }
            diag[i] = outside + shrink;
        }
        (resid, diag)
    }

    fn filter_weights(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        self.singular_values
            .iter()
            .map(|&s| if s > self.cutoff { g(s) } else { 0.0 })
            .collect()
    }

    fn complement_of_unit(&self, i: usize, kept: &[usize]) -> DVector<f64> {
        let n = self.u.nrows();
        let mut r = DVector::zeros(n);
        r[i] = 1.0;
        for _ in 0..2 {
            for &k in kept {
                let col = self.u.column(k);
                let c = col.dot(&r);
                r.axpy(-c, &col, 1.0);
            }
        }
        r
    }
}

// The bidiagonal QR iteration behind nalgebra's SVD occasionally stops with
// an inaccurate factorization (seen about once per several thousand random
// square matrices). Each attempt is verified and the next variant tried.
const SVD_TOLERANCES: [f64; 3] = [5.0 * f64::EPSILON, f64::EPSILON, 1e-14];

fn svd_tolerance(m: &DMatrix<f64>) -> f64 {
    50.0 * f64::EPSILON * m.nrows().max(m.ncols()).max(1) as f64 * m.amax()
}

type SvdFactors = (DMatrix<f64>, DVector<f64>, DMatrix<f64>);

/// Full SVD `m = U diag(s) V'` of a square matrix, verified by reconstruction.
fn checked_svd(m: &DMatrix<f64>) -> SvdFactors {
    let tolerance = svd_tolerance(m);
    let mut best: Option<(f64, SvdFactors)> = None;
    for eps in SVD_TOLERANCES {
        for transposed in [false, true] {
            let target = if transposed { m.transpose() } else { m.clone() };
            let Some(svd) = target.try_svd(true, true, eps, 0) else {
                continue;
            };
            let (u, s, v_t) = (
                svd.u.expect("U requested"),
                svd.singular_values,
                svd.v_t.expect("V' requested"),
            );
            let (u, v_t) = if transposed {
                (v_t.transpose(), u.transpose())
            } else {
                (u, v_t)
            };
            let error = (&u * DMatrix::from_diagonal(&s) * &v_t - m).amax();
            if error <= tolerance {
                return (u, s, v_t);
            }
            if best.as_ref().is_none_or(|(e, _)| error < *e) {
                best = Some((error, (u, s, v_t)));
            }
        }
    }
    let (error, factors) = best.expect("at least one SVD attempt converges");
    log::warn!("SVD reconstruction error {error:e} exceeds {tolerance:e}; using the best attempt");
    factors
}

/// Singular values in decreasing order, checked against `sum s^2 = ||X||_F^2`.
pub fn singular_values(x: &DMatrix<f64>) -> DVector<f64> {
    let frobenius = x.norm_squared();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for eps in SVD_TOLERANCES {
        for transposed in [false, true] {
            let target = if transposed { x.transpose() } else { x.clone() };
            let Some(svd) = target.try_svd(false, false, eps, 0) else {
                continue;
            };
            let s = svd.singular_values;
            let error = (s.norm_squared() - frobenius).abs() / frobenius.max(f64::MIN_POSITIVE);
            if error <= 1e-10 {
                return s;
            }
            if best.as_ref().is_none_or(|(e, _)| error < *e) {
                best = Some((error, s));
            }
        }
    }
    let (error, s) = best.expect("at least one SVD attempt converges");
    log::warn!(
        "singular values miss the Frobenius norm by a relative {error:e}; using the best attempt"
    );
    s
}

/// Unique symmetric positive definite square root, via eigendecomposition.
///
/// Eigenvalues at or below `1e-12 * lambda_max` are rejected rather than
/// clamped.
pub fn symmetric_sqrt(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (r, c) = sigma.shape();
    if r != c {
        return Err(Error::DimensionMismatch {
            what: "covariance columns",
            expected: r,
            found: c,
        });
    }
    if r == 0 {
        return Err(Error::EmptySample);
    }
    let scale = sigma.amax().max(f64::MIN_POSITIVE);
    for i in 0..r {
        for j in 0..i {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::invalid(
                    "sigma",
                    format!("matrix is not symmetric at ({i}, {j})"),
                ));
            }
        }
    }
    let eig = SymmetricEigen::new(sigma.clone());
    let lambda_max = eig.eigenvalues.max();
    let lambda_min = eig.eigenvalues.min();
    if lambda_max <= 0.0 || lambda_min <= 1e-12 * lambda_max {
        return Err(Error::NotPositiveDefinite {
            smallest: lambda_min,
        });
    }
    let roots = eig.eigenvalues.map(f64::sqrt);
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
    let mut root = scaled * eig.eigenvectors.transpose();
    // Symmetrize away rounding asymmetry.
    for i in 0..r {
        for j in 0..i {
            let avg = 0.5 * (root[(i, j)] + root[(j, i)]);
            root[(i, j)] = avg;
            root[(j, i)] = avg;
        }
    }
    Ok(root)
}

pub fn lp_norm(v: &DVector<f64>, q: f64) -> f64 {
    let scale = v.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = v.iter().map(|x| (x.abs() / scale).powf(q)).sum();
    scale * s.powf(1.0 / q)
}

/// Copy of `x` without the listed rows. Order of the retained rows is kept.
pub fn drop_rows(x: &DMatrix<f64>, excluded: &[usize]) -> DMatrix<f64> {
    let keep: Vec<usize> = (0..x.nrows()).filter(|i| !excluded.contains(i)).collect();
    x.select_rows(keep.iter())
}

pub fn drop_entries(y: &DVector<f64>, excluded: &[usize]) -> DVector<f64> {
    let keep: Vec<f64> = (0..y.len())
        .filter(|i| !excluded.contains(i))
        .map(|i| y[i])
        .collect();
    DVector::from_vec(keep)
}
