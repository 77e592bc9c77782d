#ifndef MIXED_WHITTLE_H
#define MIXED_WHITTLE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Values are stable.
 */
typedef enum MwStatus {
  MW_STATUS_OK = 0,
  MW_STATUS_NULL_POINTER = 1,
  MW_STATUS_INVALID_STRING = 2,
  MW_STATUS_DOMAIN = 3,
  MW_STATUS_DIMENSION = 4,
  MW_STATUS_LENGTH = 5,
  MW_STATUS_NOT_POSITIVE_DEFINITE = 6,
  MW_STATUS_SINGULAR = 7,
  MW_STATUS_NUMERICAL = 8,
  MW_STATUS_METRIC_NOT_APPLICABLE = 9,
  MW_STATUS_INPUT = 10,
  MW_STATUS_CONFIG = 11,
  MW_STATUS_IO = 12,
  MW_STATUS_JSON = 13,
  MW_STATUS_CSV = 14,
  MW_STATUS_BUFFER_TOO_SMALL = 15,
  MW_STATUS_PANIC = 99,
} MwStatus;

/**
 * A fitted model.
 */
typedef struct MwFit MwFit;

/**
 * Observed series with an optional exogenous driver.
 */
typedef struct MwSeries MwSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *mw_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mw_version(void);

/**
 * Creates a series from `n` values and a mask (nonzero = observed). The
 * mask may be NULL for a complete series.
 *
 * # Safety
 * `values` must point to `n` doubles, `mask` (if not NULL) to `n` bytes,
 * and `out` to writable storage for a pointer.
 */
enum MwStatus mw_series_new(const double *values,
                            const uint8_t *mask,
                            size_t n,
                            struct MwSeries **out);

/**
 * Attaches an exogenous driver whose first `lead` values precede the first
 * response time.
 *
 * # Safety
 * `series` must be a live handle and `values` must point to `len` doubles.
 */
enum MwStatus mw_series_set_exog(struct MwSeries *series,
                                 const double *values,
                                 size_t len,
                                 size_t lead);

/**
 * Number of time steps.
 *
 * # Safety
 * `series` must be a live handle or NULL (which gives 0).
 */
size_t mw_series_len(const struct MwSeries *series);

/**
 * # Safety
 * `series` must come from `mw_series_new` and not be used afterwards. NULL is ignored.
 */
void mw_series_free(struct MwSeries *series);

/**
 * Fits the model described by `spec_json` (a model specification object).
 * `optim_json` may be NULL for the default optimiser settings.
 *
 * # Safety
 * `series` must be a live handle, the strings NUL-terminated, and `out`
 * writable.
 */
enum MwStatus mw_fit(const struct MwSeries *series,
                     const char *spec_json,
                     const char *optim_json,
                     struct MwFit **out);

/**
 * # Safety
 * `fit` must come from `mw_fit` and not be used afterwards. NULL is ignored.
 */
void mw_fit_free(struct MwFit *fit);

/**
 * Attained objective and convergence flag (either output may be NULL).
 *
 * # Safety
 * `fit` must be a live handle; non-NULL outputs must be writable.
 */
enum MwStatus mw_fit_objective(const struct MwFit *fit, double *objective, bool *converged);

/**
 * Copies the regression coefficients into `buf`. `len` receives the
 * number of coefficients; if `cap` is smaller, nothing is copied and
 * `MW_STATUS_BUFFER_TOO_SMALL` is returned.
 *
 * # Safety
 * `fit` must be a live handle, `buf` must hold `cap` doubles and `len`
 * must be writable.
 */
enum MwStatus mw_fit_beta(const struct MwFit *fit, double *buf, size_t cap, size_t *len);

/**
 * The whole fit as a JSON string, released with `mw_string_free`.
 *
 * # Safety
 * `fit` must be a live handle and `out` writable.
 */
enum MwStatus mw_fit_to_json(const struct MwFit *fit, char **out);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards. NULL is ignored.
 */
void mw_string_free(char *s);

/**
 * Kriging predictions at `k` 0-based target times (indices at or past the
 * series length are forecasts). Writes `k` means and variances.
 *
 * # Safety
 * Handles must be live; `targets` must hold `k` values and `mean`,
 * `variance` room for `k` doubles.
 */
enum MwStatus mw_predict(const struct MwFit *fit,
                         const struct MwSeries *series,
                         const size_t *targets,
                         size_t k,
                         double *mean,
                         double *variance);

/**
 * Autocovariance at lags 0..n-1 of a covariance specification given as JSON.
 *
 * # Safety
 * `cov_json` must be NUL-terminated and `out` must hold `n` doubles.
 */
enum MwStatus mw_acv(const char *cov_json, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIXED_WHITTLE_H */
