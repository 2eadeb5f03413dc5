#ifndef W2LAB_H
#define W2LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. The nonzero library codes match the CLI exit codes.
 */
typedef enum W2Status {
  W2_STATUS_OK = 0,
  /**
   * Invalid input: out-of-range parameter, malformed JSON, wrong dimension.
   */
  W2_STATUS_VALIDATION = 2,
  /**
   * A bound's hypothesis does not hold for the given inputs.
   */
  W2_STATUS_HYPOTHESIS = 3,
  /**
   * Non-finite intermediate or quadrature failure.
   */
  W2_STATUS_NUMERICAL = 4,
  W2_STATUS_NULL_POINTER = 10,
  W2_STATUS_INVALID_UTF8 = 11,
  W2_STATUS_BUFFER_TOO_SMALL = 12,
  W2_STATUS_PANIC = 13,
} W2Status;

/**
 * A variance schedule and its time grid.
 */
typedef struct W2Schedule W2Schedule;

/**
 * A target distribution with closed-form smoothed scores.
 */
typedef struct W2Target W2Target;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or null. Valid until
 * the next failing call on the same thread; do not free.
 */
const char *w2_last_error(void);

/**
 * Library version (static string; do not free).
 */
const char *w2_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void w2_string_free(char *s);

/**
 * `t_i = (i + 1) / (N + 1)`, `beta_i = 1 / (i + 2)`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum W2Status w2_schedule_harmonic(size_t n, struct W2Schedule **out);

/**
 * Every `beta_i = beta0`, `t_N = 1 - delta`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum W2Status w2_schedule_constant(size_t n, double beta0, double delta, struct W2Schedule **out);

/**
 * Geometric schedule with `beta_0 = N^(-c0)` and growth rate `c1 log N / N`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum W2Status w2_schedule_geometric(size_t n,
                                    double c0,
                                    double c1,
                                    double delta,
                                    struct W2Schedule **out);

/**
 * Cosine schedule `t_i = sin^2(i pi / (2 N (1 + s)))`. A NaN `t0` selects
 * the default `t_1 / 4`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum W2Status w2_schedule_cosine(size_t n, double s, double t0, struct W2Schedule **out);

/**
 * Schedule from `len` variances and an early-stopping `delta`.
 *
 * # Safety
 * `betas` must point to `len` doubles; `out` must be a valid pointer.
 */
enum W2Status w2_schedule_from_betas(const double *betas,
                                     size_t len,
                                     double delta,
                                     struct W2Schedule **out);

/**
 * Schedule from its JSON encoding; every invariant is re-checked.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum W2Status w2_schedule_from_json(const char *json, struct W2Schedule **out);

/**
 * JSON encoding of the schedule; free with `w2_string_free`.
 *
 * # Safety
 * `schedule` must be a live handle; `out` must be a valid pointer.
 */
enum W2Status w2_schedule_to_json(const struct W2Schedule *schedule, char **out);

/**
 * Condition report as JSON; free with `w2_string_free`.
 *
 * # Safety
 * `schedule` must be a live handle; `out` must be a valid pointer.
 */
enum W2Status w2_schedule_audit_json(const struct W2Schedule *schedule, char **out);

/**
 * Number of steps `N`, or 0 for a null handle.
 *
 * # Safety
 * `schedule` must be a live handle or null.
 */
size_t w2_schedule_n_steps(const struct W2Schedule *schedule);

/**
 * Copies the `N + 1` grid times into `buf`.
 *
 * # Safety
 * `schedule` must be a live handle; `buf` must hold `len` doubles.
 */
enum W2Status w2_schedule_times(const struct W2Schedule *schedule, double *buf, size_t len);

/**
 * Copies the `N` variances into `buf`.
 *
 * # Safety
 * `schedule` must be a live handle; `buf` must hold `len` doubles.
 */
enum W2Status w2_schedule_betas(const struct W2Schedule *schedule, double *buf, size_t len);

/**
 * Releases a schedule. Null is ignored.
 *
 * # Safety
 * `schedule` must come from this library and not have been freed.
 */
void w2_schedule_free(struct W2Schedule *schedule);

/**
 * `N(mean, variance I_d)`.
 *
 * # Safety
 * `mean` must point to `d` doubles; `out` must be a valid pointer.
 */
enum W2Status w2_target_gaussian(const double *mean,
                                 size_t d,
                                 double variance,
                                 struct W2Target **out);

/**
 * Mixture of `k` spherical Gaussians; `means` is row-major `k x d`.
 *
 * # Safety
 * `weights` and `variances` must point to `k` doubles, `means` to `k * d`;
 * `out` must be a valid pointer.
 */
enum W2Status w2_target_mixture(const double *weights,
                                const double *means,
                                const double *variances,
                                size_t k,
                                size_t d,
                                struct W2Target **out);

/**
 * Dimension of the target, or 0 for a null handle.
 *
 * # Safety
 * `target` must be a live handle or null.
 */
size_t w2_target_dim(const struct W2Target *target);

/**
 * Smoothed score `grad log pi_t(y)` written to `out` (`d` doubles).
 *
 * # Safety
 * `target` must be a live handle; `y` and `out` must hold `d` doubles.
 */
enum W2Status w2_target_score(const struct W2Target *target,
                              double t,
                              const double *y,
                              size_t d,
                              double *out);

/**
 * Releases a target. Null is ignored.
 *
 * # Safety
 * `target` must come from this library and not have been freed.
 */
void w2_target_free(struct W2Target *target);

/**
 * Exact W2 between the sampler output and a Gaussian target, and to the
 * target smoothed at `t_N`. A null `score_model_json` means the exact score.
 *
 * # Safety
 * Handles must be live; `mu_hat` must hold `d` doubles; outputs must be
 * valid pointers.
 */
enum W2Status w2_exact_w2(const struct W2Schedule *schedule,
                          const struct W2Target *target,
                          const double *mu_hat,
                          size_t d,
                          const char *score_model_json,
                          double *to_target,
                          double *to_smoothed);

/**
 * Runs `n_chains` sampler chains and writes the `n_chains x d` terminal
 * points row-major into `buf`.
 *
 * # Safety
 * Handles must be live; `mu_hat` must hold `d` doubles; `buf` must hold
 * `buf_len` doubles.
 */
enum W2Status w2_ddpm_run(const struct W2Schedule *schedule,
                          const struct W2Target *target,
                          const double *mu_hat,
                          size_t d,
                          size_t n_chains,
                          uint64_t seed,
                          const char *score_model_json,
                          double *buf,
                          size_t buf_len);

/**
 * Evaluates the bound `bound_id` (e.g. `"two_sided_lipschitz"`) on inputs
 * given as JSON. Returns `W2_STATUS_HYPOTHESIS` when a hypothesis fails.
 *
 * # Safety
 * Strings must be NUL-terminated; outputs must be valid pointers.
 */
enum W2Status w2_bound_evaluate(const char *bound_id,
                                const char *params_json,
                                double *value,
                                bool *constant_known);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* W2LAB_H */
