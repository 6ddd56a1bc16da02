#ifndef MOVSEQ_H
#define MOVSEQ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Spectral features of one uniformly sampled series.
 */
#define MOVSEQ_SPECTRAL_FEATURES 18

/**
 * Result of every fallible call.
 */
typedef enum MovseqStatus {
  MOVSEQ_STATUS_OK = 0,
  MOVSEQ_STATUS_NULL_POINTER = 1,
  MOVSEQ_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Unreadable or malformed session data.
   */
  MOVSEQ_STATUS_INVALID_INPUT = 3,
  /**
   * Numerical failure: factorization, no fundamental, degenerate chain.
   */
  MOVSEQ_STATUS_NUMERICAL = 4,
  /**
   * Too few samples, rows or pairs for the requested computation.
   */
  MOVSEQ_STATUS_INSUFFICIENT_DATA = 5,
  MOVSEQ_STATUS_IO = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  MOVSEQ_STATUS_INTERNAL = 7,
} MovseqStatus;

/**
 * Slices × 132 feature values.
 */
typedef struct MovseqFeatureMatrix MovseqFeatureMatrix;

/**
 * Sum of SHO terms plus white jitter.
 */
typedef struct MovseqGpModel MovseqGpModel;

/**
 * One ingested recording.
 */
typedef struct MovseqSession MovseqSession;

/**
 * Featurization settings. Zeroed fields take the library defaults.
 */
typedef struct MovseqFeaturizeOptions {
  double window_s;
  /**
   * Nonzero fits the oscillator model per slice and direction (slow).
   */
  uint8_t fit_gp;
  size_t hmc_steps;
  size_t hmc_warmup;
  /**
   * Worker threads; 0 uses one.
   */
  size_t jobs;
} MovseqFeaturizeOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next movseq call on the same thread.
 */
const char *movseq_last_error(void);

/**
 * Library version, static storage.
 */
const char *movseq_version(void);

/**
 * Features per slice (132).
 */
size_t movseq_feature_count(void);

/**
 * Name of feature column `index` (`AccelX.M0` ...), static storage; null when
 * out of range.
 */
const char *movseq_feature_name(size_t index);

/**
 * Builds a model from log-parameters laid out as
 * `[log S0, log Q, log w0] * n_components, log jitter`.
 *
 * # Safety
 * `log_params` must point to `n_params` doubles and `out` to a writable handle.
 */
enum MovseqStatus movseq_gp_model_new(const double *log_params,
                                      size_t n_params,
                                      struct MovseqGpModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`movseq_gp_model_new`] not yet freed.
 */
void movseq_gp_model_free(struct MovseqGpModel *model);

/**
 * Gaussian log-likelihood of `values` observed at strictly increasing `times`.
 *
 * # Safety
 * `times` and `values` must point to `n` doubles; `out` must be writable.
 */
enum MovseqStatus movseq_gp_loglike(const struct MovseqGpModel *model,
                                    const double *times,
                                    const double *values,
                                    size_t n,
                                    double *out);

/**
 * Log-likelihood and its gradient with respect to the log-parameters.
 * `grad` must hold `grad_len == 3J + 1` doubles.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum MovseqStatus movseq_gp_loglike_grad(const struct MovseqGpModel *model,
                                         const double *times,
                                         const double *values,
                                         size_t n,
                                         double *out_loglike,
                                         double *grad,
                                         size_t grad_len);

/**
 * Spectral features of a uniformly sampled series: M0..M5 then F1..F12
 * (18 values, NaN where absent).
 *
 * # Safety
 * `values` must point to `n` doubles and `out` to 18 writable doubles.
 */
enum MovseqStatus movseq_spectral_features(const double *values,
                                           size_t n,
                                           double rate,
                                           double *out);

/**
 * Paired Wilcoxon signed-rank test. NaN entries drop their pair.
 *
 * # Safety
 * `x` and `y` must point to `n` doubles; `out_w` and `out_p` must be writable.
 */
enum MovseqStatus movseq_wilcoxon_paired(const double *x,
                                         const double *y,
                                         size_t n,
                                         double *out_w,
                                         double *out_p);

/**
 * Reads a session CSV. A `.json` sidecar next to the file selects the wide
 * format; otherwise the long format is expected.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable handle.
 */
enum MovseqStatus movseq_session_load(const char *path, struct MovseqSession **out);

/**
 * # Safety
 * `session` must be null or a live handle.
 */
void movseq_session_free(struct MovseqSession *session);

/**
 * Session duration in seconds; NaN for a null handle.
 *
 * # Safety
 * `session` must be null or a live handle.
 */
double movseq_session_duration(const struct MovseqSession *session);

/**
 * 1 for condition B, 0 for NB, -1 for a null handle.
 *
 * # Safety
 * `session` must be null or a live handle.
 */
int32_t movseq_session_condition(const struct MovseqSession *session);

/**
 * Slices and featurizes a session.
 *
 * # Safety
 * `session` must be a live handle, `options` null or valid, `out` writable.
 */
enum MovseqStatus movseq_featurize(const struct MovseqSession *session,
                                   const struct MovseqFeaturizeOptions *options,
                                   uint64_t seed,
                                   struct MovseqFeatureMatrix **out);

/**
 * # Safety
 * `m` must be null or a live handle.
 */
void movseq_feature_matrix_free(struct MovseqFeatureMatrix *m);

/**
 * Number of rows (slices); 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t movseq_feature_matrix_rows(const struct MovseqFeatureMatrix *m);

/**
 * Copies row `row` into `out` (132 doubles, NaN for NA).
 *
 * # Safety
 * `m` must be a live handle and `out` must hold `out_len` doubles.
 */
enum MovseqStatus movseq_feature_matrix_row(const struct MovseqFeatureMatrix *m,
                                            size_t row,
                                            double *out,
                                            size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOVSEQ_H */
