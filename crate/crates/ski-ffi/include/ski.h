#ifndef SKI_FFI_H
#define SKI_FFI_H

/* Generated by cbindgen from ski-ffi; regenerate with `cargo build -p ski-ffi`. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Success.
 */
#define SKI_OK 0

/**
 * A required pointer was null.
 */
#define SKI_ERR_NULL_POINTER -1

/**
 * A dimension, hyperparameter, or noise specification was invalid.
 */
#define SKI_ERR_INVALID_ARGUMENT -2

/**
 * The filter update failed (lost positive definiteness or produced
 * non-finite values); the estimator should be discarded.
 */
#define SKI_ERR_FILTER -3

/**
 * The relevance update or posterior refresh failed.
 */
#define SKI_ERR_RELEVANCE -4

/**
 * An internal invariant was violated; the estimator should be discarded.
 */
#define SKI_ERR_INTERNAL -5

/**
 * Opaque estimator handle.
 */
typedef struct SkiEstimator SkiEstimator;

/**
 * State transition callback (nullable): reads `x` (`d_x`), `u` (`d_u`)
 * and the evaluated unknown term `f` (`d_f`), writes the next state into
 * `x_next` (`d_x`).
 */
typedef void (*SkiTransitionFn)(const double *x,
                                const double *u,
                                const double *f,
                                double *x_next,
                                void *user_data);

/**
 * Observation callback (nullable): reads `x` (`d_x`), writes the
 * measurement prediction into `y` (`d_y`).
 */
typedef void (*SkiObserveFn)(const double *x, double *y, void *user_data);

/**
 * Basis callback (nullable): reads `x` and `u`, writes the basis
 * evaluations into `phi` as a row-major `d_f × d_theta` matrix (column `i`
 * is the i-th candidate basis function).
 */
typedef void (*SkiBasisFn)(const double *x, const double *u, double *phi, void *user_data);

/**
 * Model description handed to [`ski_estimator_new`]. All pointers must
 * stay valid for the duration of the call; the callbacks and `user_data`
 * must stay valid for the estimator's lifetime.
 */
typedef struct SkiModelDesc {
  size_t d_x;
  size_t d_u;
  size_t d_y;
  size_t d_theta;
  size_t d_f;
  /**
   * Discrete step length in seconds.
   */
  double dt;
  /**
   * Process-noise variance per state, length `d_x`.
   */
  const double *q_diag;
  /**
   * Measurement-noise variance per channel, length `d_y`.
   */
  const double *r_diag;
  SkiTransitionFn transition;
  SkiObserveFn observe;
  SkiBasisFn basis;
  void *user_data;
} SkiModelDesc;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent error on this thread. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *ski_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *ski_version(void);

/**
 * Creates an estimator over a caller-defined model.
 *
 * `mu0` (`d_x`), `p0_diag` (`d_x`) and `s0_diag` (`d_theta`) give the
 * initial state mean, state variance and weight-prior variance; `alpha`
 * and `beta` are the unscented-transform hyperparameters. On failure the
 * return value is null and `status` (if non-null) carries the error code.
 *
 * # Safety
 * `desc` and the array pointers must reference valid memory of the
 * documented lengths; the callbacks must stay callable for the estimator's
 * lifetime.
 */
struct SkiEstimator *ski_estimator_new(const struct SkiModelDesc *desc,
                                       const double *mu0,
                                       const double *p0_diag,
                                       const double *s0_diag,
                                       double alpha,
                                       double beta,
                                       int32_t *status);

/**
 * Turns on online relevance learning: after every measurement update the
 * weight-prior variances take `n_hp` gradient steps of rate `eta_hp`
 * (clamped at `variance_floor`) and the posterior is refreshed to match.
 *
 * # Safety
 * `est` must be a live pointer from [`ski_estimator_new`].
 */
int32_t ski_estimator_enable_ard(struct SkiEstimator *est,
                                 double eta_hp,
                                 uint32_t n_hp,
                                 double variance_floor);

/**
 * One filter tick: predict with the input applied over the last interval,
 * correct with the new measurement, then (if enabled) update the
 * relevances and refresh the posterior.
 *
 * After a non-zero return the estimator is poisoned and further steps are
 * rejected.
 *
 * # Safety
 * `est` must be live; `u` and `y` must point to `d_u` and `d_y` readable
 * doubles.
 */
int32_t ski_estimator_step(struct SkiEstimator *est, const double *u, const double *y);

/**
 * Copies the current state estimate (`d_x` doubles) into `out`.
 *
 * # Safety
 * `est` must be live; `out` must hold `d_x` writable doubles.
 */
int32_t ski_estimator_state(const struct SkiEstimator *est, double *out);

/**
 * Copies the current basis-weight estimates (`d_theta` doubles) into `out`.
 *
 * # Safety
 * `est` must be live; `out` must hold `d_theta` writable doubles.
 */
int32_t ski_estimator_weights(const struct SkiEstimator *est, double *out);

/**
 * Copies the posterior weight variances (`d_theta` doubles) into `out`.
 *
 * # Safety
 * `est` must be live; `out` must hold `d_theta` writable doubles.
 */
int32_t ski_estimator_weight_variances(const struct SkiEstimator *est, double *out);

/**
 * Copies the learned per-basis prior variances (`d_theta` doubles, the
 * relevances) into `out`. Without relevance learning these stay at the
 * initial prior.
 *
 * # Safety
 * `est` must be live; `out` must hold `d_theta` writable doubles.
 */
int32_t ski_estimator_relevances(const struct SkiEstimator *est, double *out);

/**
 * Releases an estimator. Passing null is a no-op.
 *
 * # Safety
 * `est` must be null or a pointer from [`ski_estimator_new`] not yet freed.
 */
void ski_estimator_free(struct SkiEstimator *est);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SKI_FFI_H */
