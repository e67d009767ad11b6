#ifndef MRSDISTILL_H
#define MRSDISTILL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MrsStatus {
  MRS_STATUS_OK = 0,
  MRS_STATUS_NULL_POINTER = 1,
  MRS_STATUS_ARGUMENT = 2,
  MRS_STATUS_CONFIG = 3,
  MRS_STATUS_SHAPE = 4,
  MRS_STATUS_PARSE = 5,
  MRS_STATUS_STATE = 6,
  MRS_STATUS_DIVERGENCE = 7,
  MRS_STATUS_IO = 8,
  MRS_STATUS_PANIC = 9,
  MRS_STATUS_OTHER = 10,
} MrsStatus;

/**
 * Opaque dataset handle.
 */
typedef struct MrsDataset MrsDataset;

/**
 * Opaque network handle.
 */
typedef struct MrsNetwork MrsNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *mrs_last_error(void);

/**
 * Values per spectrum.
 */
size_t mrs_spectrum_len(void);

/**
 * Generates a synthetic cohort. `cohort_json` may be NULL for defaults;
 * `seed` replaces the configured seed.
 *
 * # Safety
 * `cohort_json` is NULL or a NUL-terminated string; `out` is writable.
 */
enum MrsStatus mrs_dataset_generate(const char *cohort_json,
                                    uint64_t seed,
                                    struct MrsDataset **out);

/**
 * # Safety
 * `path` is a NUL-terminated string; `out` is writable.
 */
enum MrsStatus mrs_dataset_load(const char *path, struct MrsDataset **out);

/**
 * # Safety
 * `ds` is a live handle; `path` is a NUL-terminated string.
 */
enum MrsStatus mrs_dataset_save(const struct MrsDataset *ds, const char *path);

/**
 * # Safety
 * `ds` is a live handle; `out` is writable.
 */
enum MrsStatus mrs_dataset_len(const struct MrsDataset *ds, size_t *out);

/**
 * Copies the values of spectrum `index` into `out` (capacity `out_len`).
 *
 * # Safety
 * `ds` is a live handle; `out` points to `out_len` writable doubles.
 */
enum MrsStatus mrs_dataset_values(const struct MrsDataset *ds,
                                  size_t index,
                                  double *out,
                                  size_t out_len);

/**
 * Observed label (0 healthy, 1 tumor) and hidden true label (-1 unknown).
 *
 * # Safety
 * `ds` is a live handle; both outputs are writable.
 */
enum MrsStatus mrs_dataset_label(const struct MrsDataset *ds,
                                 size_t index,
                                 int32_t *label,
                                 int32_t *true_label);

/**
 * # Safety
 * `ds` is NULL or a handle not yet freed.
 */
void mrs_dataset_free(struct MrsDataset *ds);

/**
 * Fresh network; `config_json` may be NULL for the default architecture.
 *
 * # Safety
 * `config_json` is NULL or NUL-terminated; `out` is writable.
 */
enum MrsStatus mrs_network_new(const char *config_json, uint64_t seed, struct MrsNetwork **out);

/**
 * # Safety
 * `path` is NUL-terminated; `out` is writable.
 */
enum MrsStatus mrs_network_load(const char *path, struct MrsNetwork **out);

/**
 * # Safety
 * `net` is a live handle; `path` is NUL-terminated.
 */
enum MrsStatus mrs_network_save(const struct MrsNetwork *net, const char *path);

/**
 * Trains in place on `ds`; `train_json` may be NULL for defaults.
 *
 * # Safety
 * `net` and `ds` are live handles; `train_json` is NULL or NUL-terminated.
 */
enum MrsStatus mrs_network_train(struct MrsNetwork *net,
                                 const struct MrsDataset *ds,
                                 const char *train_json);

/**
 * Class probabilities for `n` row-major spectra of `len` values each;
 * writes `2 * n` doubles to `out`.
 *
 * # Safety
 * `values` holds `n * len` doubles; `out` holds `out_len` writable doubles.
 */
enum MrsStatus mrs_network_predict(const struct MrsNetwork *net,
                                   const double *values,
                                   size_t n,
                                   size_t len,
                                   double *out,
                                   size_t out_len);

/**
 * Class activation map of one spectrum: `raw` gets the feature-map-length
 * map, `upsampled` the input-length map. `*raw_written` receives the raw length.
 *
 * # Safety
 * Buffers hold the stated number of doubles; `raw_written` is writable.
 */
enum MrsStatus mrs_network_cam(const struct MrsNetwork *net,
                               const double *values,
                               size_t len,
                               size_t class_index,
                               double *raw,
                               size_t raw_cap,
                               double *upsampled,
                               size_t upsampled_cap,
                               size_t *raw_written);

/**
 * # Safety
 * `net` is NULL or a handle not yet freed.
 */
void mrs_network_free(struct MrsNetwork *net);

/**
 * Area under the ROC curve; labels are 0 or 1.
 *
 * # Safety
 * `scores` and `labels` hold `n` elements; `out` is writable.
 */
enum MrsStatus mrs_auc(const double *scores, const int32_t *labels, size_t n, double *out);

/**
 * `(1 - alpha) * target + alpha * partner` over `len` values.
 *
 * # Safety
 * All three buffers hold `len` doubles.
 */
enum MrsStatus mrs_mix(const double *target,
                       const double *partner,
                       size_t len,
                       double alpha,
                       double *out);

/**
 * Indices of the rows of an `n x 2` probability table whose maximum is at
 * least `theta`. Writes up to `cap` indices and the full count.
 *
 * # Safety
 * `probs` holds `2 * n` doubles, `out` holds `cap` elements, `count` is writable.
 */
enum MrsStatus mrs_collect_certain(const double *probs,
                                   size_t n,
                                   double theta,
                                   size_t *out,
                                   size_t cap,
                                   size_t *count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MRSDISTILL_H */
