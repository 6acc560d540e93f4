#ifndef CAUSAL_GAP_H
#define CAUSAL_GAP_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CgDirection {
  CG_DIRECTION_FORWARD = 0,
  CG_DIRECTION_BACKWARD = 1,
  CG_DIRECTION_TIE = 2,
} CgDirection;

typedef enum CgFit {
  CG_FIT_HOMOSKEDASTIC = 0,
  CG_FIT_HETEROSKEDASTIC = 1,
} CgFit;

typedef enum CgMechanismKind {
  CG_MECHANISM_KIND_LINEAR = 0,
  CG_MECHANISM_KIND_POWER = 1,
  CG_MECHANISM_KIND_EVEN_POWER = 2,
} CgMechanismKind;

typedef enum CgNoiseKind {
  /**
   * Uniform on [-param, param].
   */
  CG_NOISE_KIND_UNIFORM = 0,
  /**
   * Centred Gaussian with variance `param`.
   */
  CG_NOISE_KIND_GAUSSIAN = 1,
  /**
   * `(Z^2 - 1) / param` with Z standard normal.
   */
  CG_NOISE_KIND_CHI1_CENTERED = 2,
} CgNoiseKind;

typedef enum CgStatus {
  CG_STATUS_OK = 0,
  /**
   * Null pointer, bad enum value, or other misuse of the interface.
   */
  CG_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Inputs outside the domain of the computation.
   */
  CG_STATUS_DOMAIN = 2,
  CG_STATUS_NUMERIC = 3,
  CG_STATUS_IO = 4,
  CG_STATUS_UNSUPPORTED = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  CG_STATUS_INTERNAL = 6,
} CgStatus;

/**
 * Opaque bivariate additive-noise model.
 */
typedef struct CgModel CgModel;

/**
 * Opaque linear structural equation model.
 */
typedef struct CgSem CgSem;

/**
 * Opaque fitted local-linear smoother.
 */
typedef struct CgSmoother CgSmoother;

typedef struct CgGap {
  double delta;
  double exp_delta_sq;
  /**
   * Residual scales (cause, effect) of the causal fit.
   */
  double sigma_fwd[2];
  /**
   * Residual scales (effect, cause) of the anti-causal fit.
   */
  double sigma_bwd[2];
} CgGap;

typedef struct CgDirectionResult {
  double score_fwd;
  double score_bwd;
  double exp_delta_sq_hat;
  enum CgDirection decision;
} CgDirectionResult;

typedef struct CgHsic {
  double statistic;
  double p_value;
  size_t n_used;
} CgHsic;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread, or null. Valid until the next failing
 * call on the same thread.
 */
const char *cg_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cg_version(void);

/**
 * Closed-form gap for uniform cause and uniform noise with a linear mechanism.
 *
 * # Safety
 * `out` must be null or valid for one write.
 */
enum CgStatus cg_ratio_uniform_linear(double beta, struct CgGap *out);

/**
 * Builds a bivariate model. `mechanism` is a [`CgMechanismKind`]; `nu` is
 * ignored for linear mechanisms. Noise kinds are [`CgNoiseKind`] values.
 *
 * # Safety
 * `out` must be null or valid for one write.
 */
enum CgStatus cg_model_new(uint32_t cause_kind,
                           double cause_param,
                           uint32_t mechanism,
                           double beta,
                           double nu,
                           uint32_t noise_kind,
                           double noise_param,
                           struct CgModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`cg_model_new`] not yet freed.
 */
void cg_model_free(struct CgModel *model);

/**
 * Population gap of `model` under the given [`CgFit`], default quadrature settings.
 *
 * # Safety
 * `model` must be a live handle; `out` must be null or valid for one write.
 */
enum CgStatus cg_population_gap(const struct CgModel *model, uint32_t fit_kind, struct CgGap *out);

/**
 * Sample-level direction scores for the pair (x, y) of length `n`.
 *
 * # Safety
 * `x` and `y` must point to `n` readable doubles; `out` must be null or
 * valid for one write.
 */
enum CgStatus cg_gaussian_direction(const double *x,
                                    const double *y,
                                    size_t n,
                                    uint32_t fit_kind,
                                    struct CgDirectionResult *out);

/**
 * Permutation HSIC test of independence between x and y.
 *
 * # Safety
 * `x` and `y` must point to `n` readable doubles; `out` must be null or
 * valid for one write.
 */
enum CgStatus cg_hsic_test(const double *x,
                           const double *y,
                           size_t n,
                           size_t permutations,
                           uint64_t seed,
                           struct CgHsic *out);

/**
 * Fits a local-linear regression of y on x with a leave-one-out bandwidth.
 *
 * # Safety
 * `x` and `y` must point to `n` readable doubles; `out` must be null or
 * valid for one write.
 */
enum CgStatus cg_smoother_fit(const double *x, const double *y, size_t n, struct CgSmoother **out);

/**
 * Evaluates the smoother at `m` points.
 *
 * # Safety
 * `smoother` must be a live handle; `q` must point to `m` readable doubles
 * and `out` to `m` writable doubles.
 */
enum CgStatus cg_smoother_predict(const struct CgSmoother *smoother,
                                  const double *q,
                                  size_t m,
                                  double *out);

/**
 * Selected bandwidth, or NaN for a null handle.
 *
 * # Safety
 * `smoother` must be null or a live handle.
 */
double cg_smoother_bandwidth(const struct CgSmoother *smoother);

/**
 * # Safety
 * `smoother` must be null or a handle from [`cg_smoother_fit`] not yet freed.
 */
void cg_smoother_free(struct CgSmoother *smoother);

/**
 * Chain SEM X1 -> X2 -> ... with edge weights `betas[0..p-1]` and the same
 * noise law at every node.
 *
 * # Safety
 * `betas` must point to `p - 1` readable doubles (may be null when p = 1);
 * `out` must be null or valid for one write.
 */
enum CgStatus cg_sem_chain(const double *betas,
                           size_t p,
                           uint32_t noise_kind,
                           double noise_param,
                           struct CgSem **out);

/**
 * Population best-linear score total for the 0-based ordering `perm`.
 *
 * # Safety
 * `sem` must be a live handle; `perm` must point to `len` readable values;
 * `out` must be null or valid for one write.
 */
enum CgStatus cg_sem_permutation_total(const struct CgSem *sem,
                                       const size_t *perm,
                                       size_t len,
                                       double *out);

/**
 * Score total of the generating order.
 *
 * # Safety
 * `sem` must be null or a live handle.
 */
double cg_sem_true_total(const struct CgSem *sem);

/**
 * # Safety
 * `sem` must be null or a handle from [`cg_sem_chain`] not yet freed.
 */
void cg_sem_free(struct CgSem *sem);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAUSAL_GAP_H */
