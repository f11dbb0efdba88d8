#ifndef AMORTIS_H
#define AMORTIS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AmortisStatus {
  AMORTIS_STATUS_OK = 0,
  AMORTIS_STATUS_NULL_POINTER = 1,
  AMORTIS_STATUS_INVALID_ARGUMENT = 2,
  AMORTIS_STATUS_SHAPE_MISMATCH = 3,
  AMORTIS_STATUS_SIMULATOR = 4,
  AMORTIS_STATUS_NUMERIC = 5,
  AMORTIS_STATUS_FORMAT = 6,
  AMORTIS_STATUS_IO = 7,
  AMORTIS_STATUS_PANIC = 8,
} AmortisStatus;

/**
 * Opaque simulated training set.
 */
typedef struct AmortisDataset AmortisDataset;

/**
 * Opaque trained posterior model with its scalers.
 */
typedef struct AmortisModel AmortisModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the next call.
 */
const char *amortis_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *amortis_version(void);

/**
 * # Safety
 * `task` must be a NUL-terminated string; the out pointers must be writable.
 */
enum AmortisStatus amortis_task_dims(const char *task, size_t *theta_dim, size_t *y_dim);

/**
 * Simulates `n` prior draws and their observations.
 *
 * # Safety
 * `task` must be a NUL-terminated string and `out` writable.
 */
enum AmortisStatus amortis_dataset_generate(const char *task,
                                            size_t n,
                                            uint64_t seed,
                                            struct AmortisDataset **out);

/**
 * Number of rows, or 0 for NULL.
 *
 * # Safety
 * `ds` must be NULL or a live dataset handle.
 */
size_t amortis_dataset_len(const struct AmortisDataset *ds);

/**
 * Copies the native-unit θ rows (`len` must equal rows × θ-dim).
 *
 * # Safety
 * `ds` must be a live handle and `buf` valid for `len` doubles.
 */
enum AmortisStatus amortis_dataset_copy_thetas(const struct AmortisDataset *ds,
                                               double *buf,
                                               size_t len);

/**
 * Copies the native-unit observation rows (`len` must equal rows × y-dim).
 *
 * # Safety
 * `ds` must be a live handle and `buf` valid for `len` doubles.
 */
enum AmortisStatus amortis_dataset_copy_ys(const struct AmortisDataset *ds,
                                           double *buf,
                                           size_t len);

/**
 * # Safety
 * `ds` must be NULL or a handle from `amortis_dataset_generate` not yet freed.
 */
void amortis_dataset_free(struct AmortisDataset *ds);

/**
 * Trains a model with the task's default architecture and training settings.
 * `max_epochs` of 0 keeps the default.
 *
 * # Safety
 * `ds` must be a live handle, `model` a NUL-terminated string and `out` writable.
 */
enum AmortisStatus amortis_model_train(const struct AmortisDataset *ds,
                                       const char *model,
                                       uint64_t seed,
                                       size_t max_epochs,
                                       struct AmortisModel **out);

/**
 * Loads a checkpoint and its JSON sidecar.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum AmortisStatus amortis_model_load(const char *path, struct AmortisModel **out);

/**
 * Writes the checkpoint to `path` and its sidecar next to it.
 *
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum AmortisStatus amortis_model_save(const struct AmortisModel *model, const char *path);

/**
 * θ-dimension, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t amortis_model_theta_dim(const struct AmortisModel *model);

/**
 * Observation dimension, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t amortis_model_y_dim(const struct AmortisModel *model);

/**
 * Draws `m` posterior samples for the native-unit observation `y0` into `out`
 * (`out_len` must equal m × θ-dim), in native θ units.
 *
 * # Safety
 * `model` must be a live handle, `y0` valid for `y_len` doubles and `out` for `out_len`.
 */
enum AmortisStatus amortis_model_sample(const struct AmortisModel *model,
                                        const double *y0,
                                        size_t y_len,
                                        size_t m,
                                        uint64_t seed,
                                        double *out,
                                        size_t out_len);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void amortis_model_free(struct AmortisModel *model);

/**
 * Squared MMD (V-statistic, Gaussian kernels at h/2, h, 2h) between `p` (n_p × d) and `q`
 * (n_q × d). A non-positive `h` selects the median-heuristic bandwidth.
 *
 * # Safety
 * `p` and `q` must hold n_p·d and n_q·d doubles; `out` must be writable.
 */
enum AmortisStatus amortis_mmd2(const double *p,
                                size_t n_p,
                                const double *q,
                                size_t n_q,
                                size_t d,
                                double h,
                                double *out);

/**
 * Cross-validated classifier two-sample accuracy between `p` and `q`.
 *
 * # Safety
 * `p` and `q` must hold n_p·d and n_q·d doubles; `out` must be writable.
 */
enum AmortisStatus amortis_c2st(const double *p,
                                size_t n_p,
                                const double *q,
                                size_t n_q,
                                size_t d,
                                uint64_t seed,
                                double *out);

/**
 * KL(q ‖ p) between diagonal Gaussians given by means and variances of length `d`.
 *
 * # Safety
 * All four input pointers must hold `d` doubles; `out` must be writable.
 */
enum AmortisStatus amortis_kl_diag(const double *mean_q,
                                   const double *var_q,
                                   const double *mean_p,
                                   const double *var_p,
                                   size_t d,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AMORTIS_H */
