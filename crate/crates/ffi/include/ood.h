#ifndef OOD_H
#define OOD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OodStatus {
  OOD_STATUS_OK = 0,
  OOD_STATUS_NULL_POINTER = 1,
  OOD_STATUS_INVALID_ARGUMENT = 2,
  OOD_STATUS_DIMENSION_MISMATCH = 3,
  OOD_STATUS_SINGULAR_COVARIANCE = 4,
  OOD_STATUS_INVALID_DATA = 5,
  OOD_STATUS_IO = 6,
  OOD_STATUS_PANIC = 7,
} OodStatus;

/**
 * Ridge policy for [`ood_gaussian_fit`], passed as `uint32_t`.
 */
typedef enum OodEpsilonKind {
  OOD_EPSILON_KIND_NONE = 0,
  OOD_EPSILON_KIND_ABSOLUTE = 1,
  OOD_EPSILON_KIND_RELATIVE = 2,
} OodEpsilonKind;

/**
 * Fitted Gaussian (opaque).
 */
typedef struct OodGaussian OodGaussian;

/**
 * Fitted PCA (opaque).
 */
typedef struct OodPca OodPca;

typedef struct OodMetrics {
  double auroc;
  double aupr;
  double fpr_at_tpr;
  double tpr_target;
} OodMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *ood_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ood_version(void);

/**
 * Fit a Gaussian to the `n × d` row-major `data`. `epsilon_kind` is an
 * [`OodEpsilonKind`] value.
 */
enum OodStatus ood_gaussian_fit(const double *data,
                                size_t n,
                                size_t d,
                                uint32_t epsilon_kind,
                                double epsilon_value,
                                struct OodGaussian **out);

size_t ood_gaussian_dim(const struct OodGaussian *model);

/**
 * Ridge added to the covariance diagonal at fit time.
 */
double ood_gaussian_epsilon(const struct OodGaussian *model);

/**
 * Mahalanobis distance of each of the `n` rows of `rows` (`n × d`) into `out[n]`.
 */
enum OodStatus ood_gaussian_mahalanobis(const struct OodGaussian *model,
                                        const double *rows,
                                        size_t n,
                                        size_t d,
                                        double *out);

enum OodStatus ood_gaussian_save(const struct OodGaussian *model, const char *dir);

enum OodStatus ood_gaussian_load(const char *dir, struct OodGaussian **out);

/**
 * Free a handle from `ood_gaussian_fit` or `ood_gaussian_load`. Null is a no-op.
 */
void ood_gaussian_free(struct OodGaussian *model);

/**
 * Fit standardization plus PCA with `n_components` components on `n × d` data.
 */
enum OodStatus ood_pca_fit(const double *data,
                           size_t n,
                           size_t d,
                           size_t n_components,
                           struct OodPca **out);

size_t ood_pca_n_components(const struct OodPca *model);

size_t ood_pca_input_dim(const struct OodPca *model);

/**
 * Project `n × d` rows; writes `n × n_components` values to `out`.
 */
enum OodStatus ood_pca_transform(const struct OodPca *model,
                                 const double *rows,
                                 size_t n,
                                 size_t d,
                                 double *out);

enum OodStatus ood_pca_save(const struct OodPca *model, const char *dir);

enum OodStatus ood_pca_load(const char *dir, struct OodPca **out);

void ood_pca_free(struct OodPca *model);

/**
 * AUROC, AUPR and FPR at `tpr_target` for `n` scores. `is_ood[i]` is
 * nonzero for OOD samples; higher scores mean more OOD.
 */
enum OodStatus ood_metrics(const double *scores,
                           const uint8_t *is_ood,
                           size_t n,
                           double tpr_target,
                           struct OodMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OOD_H */
