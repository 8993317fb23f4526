//! Data generating process for the elliptical linear model.
//!
//! Feature rows are `x_i = Σ^{1/2} l_i v_i` with a scalar radial factor
//! `l_i` and i.i.d. standardized entries `v_ij`; responses are
//! `y_i = β'x_i + σ u_i`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetric_sqrt;
use crate::rng::{substream, Purpose};

/// Recipe for the design covariance Σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SigmaSpec {
    Identity,
    /// `Σ_ij = ρ^|i-j|`.
    Toeplitz {
        rho: f64,
    },
    Explicit {
        matrix: Vec<Vec<f64>>,
    },
}

impl SigmaSpec {
    pub fn matrix(&self, p: usize) -> Result<DMatrix<f64>> {
        match self {
            SigmaSpec::Identity => Ok(DMatrix::identity(p, p)),
            SigmaSpec::Toeplitz { rho } => {
                if !(rho.abs() < 1.0) {
                    return Err(Error::invalid(
                        "sigma_spec.rho",
                        format!("must lie in (-1, 1), got {rho}"),
                    ));
                }
                Ok(DMatrix::from_fn(p, p, |i, j| {
                    rho.powi(i.abs_diff(j) as i32)
                }))
            }
            SigmaSpec::Explicit { matrix } => {
                if matrix.len() != p {
                    return Err(Error::DimensionMismatch {
                        what: "sigma_spec.matrix rows",
                        expected: p,
                        found: matrix.len(),
                    });
                }
                let mut m = DMatrix::zeros(p, p);
                for (i, row) in matrix.iter().enumerate() {
                    if row.len() != p {
                        return Err(Error::DimensionMismatch {
                            what: "sigma_spec.matrix columns",
                            expected: p,
                            found: row.len(),
                        });
                    }
                    for (j, &value) in row.iter().enumerate() {
                        m[(i, j)] = value;
                    }
                }
                Ok(m)
            }
        }
    }
}

/// Law of the radial factor `l_0`. Every variant has `E[l_0^2] = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LDist {
    Constant,
    TwoPoint {
        values: [f64; 2],
        probs: [f64; 2],
    },
    /// Uniform on `[low, high]`, rescaled to unit second moment.
    ScaledUniform {
        low: f64,
        high: f64,
    },
}

impl LDist {
    pub fn validate(&self) -> Result<()> {
        match self {
            LDist::Constant => Ok(()),
            LDist::TwoPoint { values, probs } => {
                if probs.iter().any(|&q| !(0.0..=1.0).contains(&q))
                    || (probs[0] + probs[1] - 1.0).abs() > 1e-12
                {
                    return Err(Error::invalid(
                        "l_dist.probs",
                        "must be non-negative and sum to 1",
                    ));
                }
                let second = probs[0] * values[0] * values[0] + probs[1] * values[1] * values[1];
                if (second - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(
                        "l_dist",
                        format!("E[l^2] must equal 1, got {second}"),
                    ));
                }
                if !(self.floor() > 0.0) {
                    return Err(Error::invalid(
                        "l_dist.values",
                        "|l| must be bounded away from 0",
                    ));
                }
                Ok(())
            }
            LDist::ScaledUniform { low, high } => {
                if !(*low > 0.0 && high > low) {
                    return Err(Error::invalid(
                        "l_dist",
                        format!("need 0 < low < high, got [{low}, {high}]"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// The constant `c` with `|l_0| >= c` almost surely.
    pub fn floor(&self) -> f64 {
        match self {
            LDist::Constant => 1.0,
            LDist::TwoPoint { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(_, &q)| q > 0.0)
                .map(|(v, _)| v.abs())
                .fold(f64::INFINITY, f64::min),
            LDist::ScaledUniform { low, .. } => low / self.uniform_scale(),
        }
    }

    fn uniform_scale(&self) -> f64 {
        match self {
            LDist::ScaledUniform { low, high } => {
                ((high.powi(3) - low.powi(3)) / (3.0 * (high - low))).sqrt()
            }
            _ => 1.0,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, LDist::Constant)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            LDist::Constant => 1.0,
            LDist::TwoPoint { values, probs } => {
                if rng.random::<f64>() < probs[0] {
                    values[0]
                } else {
                    values[1]
                }
            }
            LDist::ScaledUniform { low, high } => {
                (low + (high - low) * rng.random::<f64>()) / self.uniform_scale()
            }
        }
    }
}

/// Law of the standardized design entries `v_ij` (mean 0, variance 1, finite fourth moment).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VDist {
    Normal,
    Rademacher,
    Uniform,
    StudentT { df: f64 },
}

impl VDist {
    pub fn validate(&self) -> Result<()> {
        match self {
            VDist::StudentT { df } if !(*df > 4.0) => Err(Error::invalid(
                "v_dist.df",
                format!("needs df > 4 for a finite fourth moment, got {df}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            VDist::Normal => StandardNormal.sample(rng),
            VDist::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            VDist::Uniform => (2.0 * rng.random::<f64>() - 1.0) * 3f64.sqrt(),
            VDist::StudentT { df } => {
                let t: f64 = StudentT::new(*df).expect("validated df").sample(rng);
                t * ((df - 2.0) / df).sqrt()
            }
        }
    }
}

/// Law of the error `u_0`. Laws with a finite variance are standardized to
/// mean 0 and variance 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum UDist {
    Normal,
    /// Student t; rescaled to unit variance when `df > 2`.
    StudentT {
        df: f64,
    },
    /// `Exp(1) - 1`.
    CenteredExponential,
    /// `±1` with equal probability.
    TwoPoint,
}

impl UDist {
    pub fn validate(&self) -> Result<()> {
        match self {
            UDist::StudentT { df } if !(*df > 0.0) => Err(Error::invalid(
                "u_dist.df",
                format!("must be positive, got {df}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, UDist::TwoPoint)
    }

    pub fn has_unit_variance(&self) -> bool {
        match self {
            UDist::StudentT { df } => *df > 2.0,
            _ => true,
        }
    }

    /// Analytic skewness where the third moment exists.
    pub fn skewness(&self) -> Option<f64> {
        match self {
            UDist::Normal | UDist::TwoPoint => Some(0.0),
            UDist::CenteredExponential => Some(2.0),
            UDist::StudentT { df } => (*df > 3.0).then_some(0.0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            UDist::Normal => StandardNormal.sample(rng),
            UDist::StudentT { df } => {
                let t: f64 = StudentT::new(*df).expect("validated df").sample(rng);
                if *df > 2.0 {
                    t * ((df - 2.0) / df).sqrt()
                } else {
                    t
                }
            }
            UDist::CenteredExponential => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
            UDist::TwoPoint => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub n: usize,
    pub p: usize,
    #[serde(default = "default_sigma_spec")]
    pub sigma_spec: SigmaSpec,
    #[serde(default = "default_l_dist")]
    pub l_dist: LDist,
    #[serde(default = "default_v_dist")]
    pub v_dist: VDist,
    #[serde(default = "default_u_dist")]
    pub u_dist: UDist,
}

fn default_sigma_spec() -> SigmaSpec {
    SigmaSpec::Identity
}
fn default_l_dist() -> LDist {
    LDist::Constant
}
fn default_v_dist() -> VDist {
    VDist::Normal
}
fn default_u_dist() -> UDist {
    UDist::Normal
}

impl DesignSpec {
    /// Standard Gaussian design: identity Σ, `l ≡ 1`, normal `v` and `u`.
    pub fn gaussian(n: usize, p: usize) -> Self {
        DesignSpec {
            n,
            p,
            sigma_spec: SigmaSpec::Identity,
            l_dist: LDist::Constant,
            v_dist: VDist::Normal,
            u_dist: UDist::Normal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("design.n", "must be positive"));
        }
        if self.p == 0 {
            return Err(Error::invalid("design.p", "must be positive"));
        }
        self.l_dist.validate()?;
        self.v_dist.validate()?;
        self.u_dist.validate()
    }
}

/// A validated design with its covariance square root materialized.
#[derive(Debug, Clone)]
pub struct Design {
    spec: DesignSpec,
    sigma_sqrt: DMatrix<f64>,
    identity: bool,
}

impl Design {
    pub fn new(spec: DesignSpec) -> Result<Self> {
        spec.validate()?;
        let identity = matches!(spec.sigma_spec, SigmaSpec::Identity);
        let sigma_sqrt = if identity {
            DMatrix::identity(spec.p, spec.p)
        } else {
            symmetric_sqrt(&spec.sigma_spec.matrix(spec.p)?)?
        };
        Ok(Design {
            spec,
            sigma_sqrt,
            identity,
        })
    }

    pub fn spec(&self) -> &DesignSpec {
        &self.spec
    }

    pub fn sigma_sqrt(&self) -> &DMatrix<f64> {
        &self.sigma_sqrt
    }

    pub fn l_floor(&self) -> f64 {
        self.spec.l_dist.floor()
    }

    /// Draws `l v` into `out` (the standardized row), returning nothing.
    fn fill_standardized<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let l = self.spec.l_dist.sample(rng);
        for z in out.iter_mut() {
            *z = l * self.spec.v_dist.sample(rng);
        }
    }

    /// `n × p` design with rows `Σ^{1/2} l_i v_i`.
    pub fn sample_design<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let (n, p) = (self.spec.n, self.spec.p);
        let mut z = DMatrix::zeros(n, p);
        let mut row = vec![0.0; p];
        for i in 0..n {
            self.fill_standardized(rng, &mut row);
            for (j, &value) in row.iter().enumerate() {
                z[(i, j)] = value;
            }
        }
        if self.identity {
            z
        } else {
            z * &self.sigma_sqrt
        }
    }

    /// One prediction-period pair `(x_0, y_0)` drawn from the training law.
    pub fn sample_prediction_pair<R: Rng + ?Sized>(
        &self,
        beta: &DVector<f64>,
        sigma: f64,
        rng: &mut R,
    ) -> (DVector<f64>, f64) {
        let mut z = DVector::zeros(self.spec.p);
        self.fill_standardized(rng, z.as_mut_slice());
        let x0 = if self.identity {
            z
        } else {
            &self.sigma_sqrt * z
        };
        let y0 = x0.dot(beta) + sigma * self.spec.u_dist.sample(rng);
        (x0, y0)
    }
}

/// `Y = Xβ + σu`; returns `(Y, u)`.
pub fn sample_responses<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    sigma: f64,
    u_dist: &UDist,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if x.ncols() != beta.len() {
        return Err(Error::DimensionMismatch {
            what: "beta",
            expected: x.ncols(),
            found: beta.len(),
        });
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(
            "sigma",
            format!("must be positive, got {sigma}"),
        ));
    }
    let u = DVector::from_fn(x.nrows(), |_, _| u_dist.sample(rng));
    let y = x * beta + &u * sigma;
    Ok((y, u))
}

/// How the true coefficient vector is chosen for a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BetaSpec {
    Zero,
    /// `Σ^{1/2}β` proportional to the all-ones vector with `‖Σ^{1/2}β‖₂ = signal`.
    Dense {
        signal: f64,
    },
    /// First `s` coordinates equal to `magnitude`, the rest zero.
    Sparse {
        s: usize,
        magnitude: f64,
    },
}

impl BetaSpec {
    pub fn realize(&self, design: &Design) -> Result<DVector<f64>> {
        let p = design.spec.p;
        match self {
            BetaSpec::Zero => Ok(DVector::zeros(p)),
            BetaSpec::Dense { signal } => {
                let w = DVector::from_element(p, signal / (p as f64).sqrt());
                if design.identity {
                    return Ok(w);
                }
                let chol = design
                    .sigma_sqrt
                    .clone()
                    .cholesky()
                    .ok_or(Error::NotPositiveDefinite { smallest: f64::NAN })?;
                Ok(chol.solve(&w))
            }
            BetaSpec::Sparse { s, magnitude } => {
                if *s > p {
                    return Err(Error::invalid(
                        "beta.s",
                        format!("must not exceed p = {p}, got {s}"),
                    ));
                }
                Ok(DVector::from_fn(
                    p,
                    |j, _| if j < *s { *magnitude } else { 0.0 },
                ))
            }
        }
    }
}

/// Where a training draw came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master: u64,
    pub replication: u64,
}

/// One realized training sample.
#[derive(Debug, Clone)]
pub struct ModelInstance {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub u: DVector<f64>,
    pub beta: DVector<f64>,
    pub sigma: f64,
    pub sigma_sqrt: DMatrix<f64>,
    pub seed: SeedRecord,
}

impl ModelInstance {
    /// Draws `(X, Y)` from the replication's design and response substreams.
    pub fn generate(
        design: &Design,
        beta: &DVector<f64>,
        sigma: f64,
        master: u64,
        replication: u64,
    ) -> Result<Self> {
        let mut design_stream = substream(master, replication, Purpose::Design);
        let mut response_stream = substream(master, replication, Purpose::Responses);
        let x = design.sample_design(&mut design_stream);
        let (y, u) = sample_responses(&x, beta, sigma, &design.spec.u_dist, &mut response_stream)?;
        Ok(ModelInstance {
            x,
            y,
            u,
            beta: beta.clone(),
            sigma,
            sigma_sqrt: design.sigma_sqrt.clone(),
            seed: SeedRecord {
                master,
                replication,
            },
        })
    }

    /// `Σ^{1/2}(b - β)/σ`.
    pub fn scaled_error(&self, b: &DVector<f64>) -> DVector<f64> {
        (&self.sigma_sqrt * (b - &self.beta)) / self.sigma
    }
}
