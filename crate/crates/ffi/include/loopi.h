#ifndef LOOPI_H
#define LOOPI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every entry point.
 */
typedef enum LoopiStatus {
  LOOPI_STATUS_OK = 0,
  LOOPI_STATUS_NULL_POINTER = 1,
  LOOPI_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A fit or residual computation failed (singular design, unit leverage, ...).
   */
  LOOPI_STATUS_NUMERICAL = 3,
  /**
   * Output buffer length differs from the required length.
   */
  LOOPI_STATUS_BUFFER_SIZE = 4,
  /**
   * Internal panic caught at the boundary.
   */
  LOOPI_STATUS_PANIC = 5,
} LoopiStatus;

typedef enum LoopiEstimator {
  LOOPI_ESTIMATOR_OLS = 0,
  /**
   * Hyperparameter: penalty `lambda > 0`.
   */
  LOOPI_ESTIMATOR_RIDGE = 1,
  /**
   * Hyperparameter: penalty `lambda > 0`.
   */
  LOOPI_ESTIMATOR_LASSO = 2,
  /**
   * Hyperparameter: threshold `k > 0`.
   */
  LOOPI_ESTIMATOR_HUBER = 3,
  /**
   * Hyperparameter: shrinkage constant `c > 0`.
   */
  LOOPI_ESTIMATOR_JAMES_STEIN = 4,
} LoopiEstimator;

typedef enum LoopiSidedness {
  LOOPI_SIDEDNESS_TWO_SIDED = 0,
  /**
   * Lower bound only; `upper` is `+inf`.
   */
  LOOPI_SIDEDNESS_LOWER_ONLY = 1,
  /**
   * Upper bound only; `lower` is `-inf`.
   */
  LOOPI_SIDEDNESS_UPPER_ONLY = 2,
} LoopiSidedness;

/**
 * Fitted estimator with its leave-one-out residuals. Opaque to C.
 */
typedef struct LoopiModel LoopiModel;

typedef struct LoopiInterval {
  double lower;
  double upper;
  /**
   * Point forecast `x0' beta_hat`.
   */
  double point;
  double alpha;
} LoopiInterval;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Fits `kind` (a `LoopiEstimator` value) to the row-major `n x p` design `x`
 * and responses `y`, and computes leave-one-out residuals. On success `*out`
 * receives a new handle.
 *
 * # Safety
 * `x` must point to `n * p` doubles, `y` to `n` doubles, `out` to a writable
 * handle slot.
 */
enum LoopiStatus loopi_model_fit(const double *x,
                                 size_t n,
                                 size_t p,
                                 const double *y,
                                 uint32_t kind,
                                 double hyperparameter,
                                 struct LoopiModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle from `loopi_model_fit` not yet freed.
 */
void loopi_model_free(struct LoopiModel *model);

/**
 * Writes the number of observations and features.
 *
 * # Safety
 * Pointers must be valid or null.
 */
enum LoopiStatus loopi_model_dims(const struct LoopiModel *model, size_t *n, size_t *p);

/**
 * Copies the `p` fitted coefficients into `out` (`len` must equal `p`).
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum LoopiStatus loopi_model_coefficients(const struct LoopiModel *model, double *out, size_t len);

/**
 * Copies the `n` leave-one-out residuals into `out` (`len` must equal `n`).
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum LoopiStatus loopi_model_loo_residuals(const struct LoopiModel *model, double *out, size_t len);

/**
 * Leave-one-out prediction interval at `x0` (length `p`) with level
 * `1 - alpha`; `side` is a `LoopiSidedness` value.
 *
 * # Safety
 * `x0` must point to `p` doubles and `out` to a writable `LoopiInterval`.
 */
enum LoopiStatus loopi_model_interval(const struct LoopiModel *model,
                                      const double *x0,
                                      size_t p,
                                      double alpha,
                                      uint32_t side,
                                      struct LoopiInterval *out);

/**
 * Sample-splitting interval: fit on the first `ceil(nu * n)` rows, take
 * residual quantiles on the rest.
 *
 * # Safety
 * As for `loopi_model_fit`; `x0` must point to `p` doubles and `out` to a
 * writable `LoopiInterval`.
 */
enum LoopiStatus loopi_split_interval(const double *x,
                                      size_t n,
                                      size_t p,
                                      const double *y,
                                      uint32_t kind,
                                      double hyperparameter,
                                      const double *x0,
                                      double nu,
                                      double alpha,
                                      uint32_t side,
                                      struct LoopiInterval *out);

/**
 * Empirical `t`-quantile: the `ceil(m t)`-th order statistic of `sample`.
 *
 * # Safety
 * `sample` must point to `m` doubles and `out` to a writable double.
 */
enum LoopiStatus loopi_empirical_quantile(const double *sample, size_t m, double t, double *out);

/**
 * Message for the last failed call on this thread, or null after a
 * success. Valid until the next call into this library on the same thread.
 */
const char *loopi_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *loopi_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOOPI_H */
