//! C ABI for leave-one-out prediction intervals.
//!
//! Matrices are passed row-major as `n * p` doubles. Every function returns a
//! [`LoopiStatus`]; on failure a message is available from
//! [`loopi_last_error`] on the same thread until the next call. Handles
//! created by [`loopi_model_fit`] must be released with [`loopi_model_free`].
//! Enum-valued parameters are passed as `uint32_t` and checked, so an
//! out-of-range value yields `LOOPI_STATUS_INVALID_ARGUMENT`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use loopi::intervals::{build_split_interval, empirical_quantile};
use loopi::{Error, EstimatorSpec, LooPredictor, PredictionInterval, Sidedness};
use nalgebra::{DMatrix, DVector};

/// Result code of every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A fit or residual computation failed (singular design, unit leverage, ...).
    Numerical = 3,
    /// Output buffer length differs from the required length.
    BufferSize = 4,
    /// Internal panic caught at the boundary.
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopiEstimator {
    Ols = 0,
    /// Hyperparameter: penalty `lambda > 0`.
    Ridge = 1,
    /// Hyperparameter: penalty `lambda > 0`.
    Lasso = 2,
    /// Hyperparameter: threshold `k > 0`.
    Huber = 3,
    /// Hyperparameter: shrinkage constant `c > 0`.
    JamesStein = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopiSidedness {
    TwoSided = 0,
    /// Lower bound only; `upper` is `+inf`.
    LowerOnly = 1,
    /// Upper bound only; `lower` is `-inf`.
    UpperOnly = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopiInterval {
    pub lower: f64,
    pub upper: f64,
    /// Point forecast `x0' beta_hat`.
    pub point: f64,
    pub alpha: f64,
}

/// Fitted estimator with its leave-one-out residuals. Opaque to C.
pub struct LoopiModel {
    predictor: LooPredictor,
    p: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(LoopiStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidParameter { .. }
            | Error::DimensionMismatch { .. }
            | Error::EmptySample => LoopiStatus::InvalidArgument,
            _ => LoopiStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: LoopiStatus, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, message.into()))
}

fn set_last_error(message: Option<String>) {
    let c = message.map(|m| CString::new(m.replace('\0', " ")).expect("no interior nul"));
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> LoopiStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error(None);
            LoopiStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(Some(message));
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(Some(format!("internal panic: {message}")));
            LoopiStatus::Panic
        }
    }
}

/// # Safety
/// `data` must be null or point to `len` readable doubles.
unsafe fn input<'a>(data: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if data.is_null() {
        return fail(LoopiStatus::NullPointer, format!("{name} is null"));
    }
    Ok(slice::from_raw_parts(data, len))
}

/// # Safety
/// `out` must be null or point to `len` writable doubles.
unsafe fn write_out(out: *mut f64, len: usize, values: &[f64], name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return fail(LoopiStatus::NullPointer, format!("{name} is null"));
    }
    if len != values.len() {
        return fail(
            LoopiStatus::BufferSize,
            format!("{name} has length {len}, need {}", values.len()),
        );
    }
    slice::from_raw_parts_mut(out, len).copy_from_slice(values);
    Ok(())
}

fn spec_for(kind: u32, hyperparameter: f64) -> Result<EstimatorSpec, Failure> {
    let spec = match kind {
        k if k == LoopiEstimator::Ols as u32 => EstimatorSpec::ols(),
        k if k == LoopiEstimator::Ridge as u32 => EstimatorSpec::ridge(hyperparameter),
        k if k == LoopiEstimator::Lasso as u32 => EstimatorSpec::lasso(hyperparameter),
        k if k == LoopiEstimator::Huber as u32 => EstimatorSpec::huber(hyperparameter),
        k if k == LoopiEstimator::JamesStein as u32 => EstimatorSpec::james_stein(hyperparameter),
        other => {
            return fail(
                LoopiStatus::InvalidArgument,
                format!("unknown estimator kind {other}"),
            )
        }
    };
    spec.validate()?;
    Ok(spec)
}

fn sidedness(side: u32) -> Result<Sidedness, Failure> {
    match side {
        s if s == LoopiSidedness::TwoSided as u32 => Ok(Sidedness::TwoSided),
        s if s == LoopiSidedness::LowerOnly as u32 => Ok(Sidedness::LowerOnly),
        s if s == LoopiSidedness::UpperOnly as u32 => Ok(Sidedness::UpperOnly),
        other => fail(
            LoopiStatus::InvalidArgument,
            format!("unknown sidedness {other}"),
        ),
    }
}

/// # Safety
/// `x` must hold `n * p` doubles and `y` must hold `n` doubles.
unsafe fn problem(
    x: *const f64,
    n: usize,
    p: usize,
    y: *const f64,
) -> Result<(DMatrix<f64>, DVector<f64>), Failure> {
    if n == 0 || p == 0 {
        return fail(
            LoopiStatus::InvalidArgument,
            format!("need n > 0 and p > 0, got n = {n}, p = {p}"),
        );
    }
    let Some(len) = n.checked_mul(p) else {
        return fail(LoopiStatus::InvalidArgument, "n * p overflows");
    };
    let x = input(x, len, "x")?;
    let y = input(y, n, "y")?;
    Ok((
        DMatrix::from_row_slice(n, p, x),
        DVector::from_column_slice(y),
    ))
}

fn write_interval(out: *mut LoopiInterval, pi: PredictionInterval) -> Result<(), Failure> {
    if out.is_null() {
        return fail(LoopiStatus::NullPointer, "out is null");
    }
    // SAFETY: checked non-null; the caller provides a writable LoopiInterval.
    unsafe {
        *out = LoopiInterval {
            lower: pi.lower,
            upper: pi.upper,
            point: pi.point,
            alpha: pi.alpha,
        }
    };
    Ok(())
}

fn model_ref<'a>(model: *const LoopiModel) -> Result<&'a LoopiModel, Failure> {
    // SAFETY: a non-null handle comes from loopi_model_fit and is not yet freed.
    unsafe { model.as_ref() }.ok_or(Failure(LoopiStatus::NullPointer, "model is null".into()))
}

/// Fits `kind` (a `LoopiEstimator` value) to the row-major `n x p` design `x`
/// and responses `y`, and computes leave-one-out residuals. On success `*out`
/// receives a new handle.
///
/// # Safety
/// `x` must point to `n * p` doubles, `y` to `n` doubles, `out` to a writable
/// handle slot.
#[no_mangle]
pub unsafe extern "C" fn loopi_model_fit(
    x: *const f64,
    n: usize,
    p: usize,
    y: *const f64,
    kind: u32,
    hyperparameter: f64,
    out: *mut *mut LoopiModel,
) -> LoopiStatus {
    guard(|| {
        if out.is_null() {
            return fail(LoopiStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let spec = spec_for(kind, hyperparameter)?;
        let (x, y) = problem(x, n, p, y)?;
        let predictor = LooPredictor::fit(&spec, &x, &y)?;
        *out = Box::into_raw(Box::new(LoopiModel { predictor, p }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from `loopi_model_fit` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn loopi_model_free(model: *mut LoopiModel) {
    if !model.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(model))));
    }
}

/// Writes the number of observations and features.
///
/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn loopi_model_dims(
    model: *const LoopiModel,
    n: *mut usize,
    p: *mut usize,
) -> LoopiStatus {
    guard(|| {
        let m = model_ref(model)?;
        if n.is_null() || p.is_null() {
            return fail(LoopiStatus::NullPointer, "n or p is null");
        }
        *n = m.predictor.loo.values.len();
        *p = m.p;
        Ok(())
    })
}

/// Copies the `p` fitted coefficients into `out` (`len` must equal `p`).
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn loopi_model_coefficients(
    model: *const LoopiModel,
    out: *mut f64,
    len: usize,
) -> LoopiStatus {
    guard(|| {
        write_out(
            out,
            len,
            model_ref(model)?.predictor.beta_hat().as_slice(),
            "out",
        )
    })
}

/// Copies the `n` leave-one-out residuals into `out` (`len` must equal `n`).
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn loopi_model_loo_residuals(
    model: *const LoopiModel,
    out: *mut f64,
    len: usize,
) -> LoopiStatus {
    guard(|| write_out(out, len, &model_ref(model)?.predictor.loo.values, "out"))
}

/// Leave-one-out prediction interval at `x0` (length `p`) with level
/// `1 - alpha`; `side` is a `LoopiSidedness` value.
///
/// # Safety
/// `x0` must point to `p` doubles and `out` to a writable `LoopiInterval`.
#[no_mangle]
pub unsafe extern "C" fn loopi_model_interval(
    model: *const LoopiModel,
    x0: *const f64,
    p: usize,
    alpha: f64,
    side: u32,
    out: *mut LoopiInterval,
) -> LoopiStatus {
    guard(|| {
        let m = model_ref(model)?;
        if p != m.p {
            return fail(
                LoopiStatus::InvalidArgument,
                format!("x0 has length {p}, model has {} features", m.p),
            );
        }
        let x0 = DVector::from_column_slice(input(x0, p, "x0")?);
        write_interval(out, m.predictor.interval(&x0, alpha, sidedness(side)?)?)
    })
}

/// Sample-splitting interval: fit on the first `ceil(nu * n)` rows, take
/// residual quantiles on the rest.
///
/// # Safety
/// As for `loopi_model_fit`; `x0` must point to `p` doubles and `out` to a
/// writable `LoopiInterval`.
#[no_mangle]
pub unsafe extern "C" fn loopi_split_interval(
    x: *const f64,
    n: usize,
    p: usize,
    y: *const f64,
    kind: u32,
    hyperparameter: f64,
    x0: *const f64,
    nu: f64,
    alpha: f64,
    side: u32,
    out: *mut LoopiInterval,
) -> LoopiStatus {
    guard(|| {
        let spec = spec_for(kind, hyperparameter)?;
        let (x, y) = problem(x, n, p, y)?;
        let x0 = DVector::from_column_slice(input(x0, p, "x0")?);
        write_interval(
            out,
            build_split_interval(&spec, &x, &y, &x0, nu, alpha, sidedness(side)?)?,
        )
    })
}

/// Empirical `t`-quantile: the `ceil(m t)`-th order statistic of `sample`.
///
/// # Safety
/// `sample` must point to `m` doubles and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn loopi_empirical_quantile(
    sample: *const f64,
    m: usize,
    t: f64,
    out: *mut f64,
) -> LoopiStatus {
    guard(|| {
        let s = input(sample, m, "sample")?;
        if out.is_null() {
            return fail(LoopiStatus::NullPointer, "out is null");
        }
        *out = empirical_quantile(s, t)?;
        Ok(())
    })
}

/// Message for the last failed call on this thread, or null after a
/// success. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn loopi_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn loopi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
