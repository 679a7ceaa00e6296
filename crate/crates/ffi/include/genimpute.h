#ifndef GENIMPUTE_H
#define GENIMPUTE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  GI_STATUS_OK = 0,
  GI_STATUS_NULL_ARGUMENT = 1,
  GI_STATUS_INVALID_ARGUMENT = 2,
  GI_STATUS_SCHEMA = 3,
  GI_STATUS_DATA = 4,
  GI_STATUS_IO = 5,
  GI_STATUS_UNDEFINED_METRIC = 6,
  GI_STATUS_DIVERGED = 7,
  GI_STATUS_CHECKPOINT_VERSION = 8,
  GI_STATUS_CORRUPT_CHECKPOINT = 9,
  GI_STATUS_BUFFER_TOO_SMALL = 10,
  GI_STATUS_INTERNAL = 11,
} GiStatus;

typedef enum {
  GI_SCALING_ALL = 0,
  GI_SCALING_TRAIN = 1,
} GiScaling;

/**
 * Which partition of a prepared dataset to address.
 */
typedef enum {
  GI_PARTITION_TRAIN = 0,
  GI_PARTITION_TEST = 1,
} GiPartition;

/**
 * Which matrix of a partition to copy out.
 */
typedef enum {
  /**
   * Encoded values before amputation.
   */
  GI_MATRIX_TRUTH = 0,
  /**
   * Encoded values with noise in the missing cells.
   */
  GI_MATRIX_AMPUTED = 1,
  /**
   * 1 observed, 0 missing, as doubles.
   */
  GI_MATRIX_MASK = 2,
} GiMatrix;

/**
 * A loaded CSV with its schema.
 */
typedef struct GiDataset GiDataset;

/**
 * A trained GAIN or VAE.
 */
typedef struct GiModel GiModel;

/**
 * Split, scaled and amputated partitions of one dataset.
 */
typedef struct GiPrepared GiPrepared;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library from the same thread.
 */
const char *gi_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gi_version(void);

/**
 * Loads a CSV file. `schema_path` may be null to infer variable types.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
GiStatus gi_dataset_load(const char *csv_path, const char *schema_path, GiDataset **out_dataset);

/**
 * # Safety
 * `dataset` must be a live handle; outputs must be writable.
 */
GiStatus gi_dataset_shape(const GiDataset *dataset, size_t *out_rows, size_t *out_variables);

/**
 * # Safety
 * `dataset` must be null or a handle from [`gi_dataset_load`] not yet freed.
 */
void gi_dataset_free(GiDataset *dataset);

/**
 * Splits 90/10, scales and amputates both partitions with probability `missing_p`.
 *
 * # Safety
 * `dataset` must be a live handle; `out_prepared` must be writable.
 */
GiStatus gi_ampute(const GiDataset *dataset,
                   double missing_p,
                   uint64_t seed,
                   GiScaling scaling,
                   GiPrepared **out_prepared);

/**
 * Rows of a partition and the encoded feature count.
 *
 * # Safety
 * `prepared` must be a live handle; outputs must be writable.
 */
GiStatus gi_prepared_shape(const GiPrepared *prepared,
                           GiPartition which,
                           size_t *out_rows,
                           size_t *out_features);

/**
 * Copies one matrix of a partition into `buf` (row-major, `rows * features` values).
 *
 * # Safety
 * `prepared` must be a live handle; `buf` must hold `len` doubles.
 */
GiStatus gi_prepared_copy(const GiPrepared *prepared,
                          GiPartition which,
                          GiMatrix matrix,
                          double *buf,
                          size_t len);

/**
 * # Safety
 * `prepared` must be null or a handle from [`gi_ampute`] not yet freed.
 */
void gi_prepared_free(GiPrepared *prepared);

/**
 * Trains on the training partition. `hyper_json` may be null for defaults;
 * otherwise it is a JSON object of hyperparameters where missing fields keep
 * their defaults. `method` overrides any method in the JSON.
 *
 * # Safety
 * `prepared` must be a live handle; strings null or NUL-terminated.
 */
GiStatus gi_train(const GiPrepared *prepared,
                  const char *method,
                  const char *hyper_json,
                  GiModel **out_model);

/**
 * Imputes a partition into `buf`. `method` may be null to use the model's
 * own method, or name another procedure of the same family (e.g. `vae+it`
 * on a `vae` model). Writes the pass count of iterative procedures to
 * `out_iterations` when it is non-null (0 otherwise).
 *
 * # Safety
 * Handles must be live; `buf` must hold `len` doubles.
 */
GiStatus gi_impute(GiModel *model,
                   const GiPrepared *prepared,
                   GiPartition which,
                   const char *method,
                   uint64_t seed,
                   double *buf,
                   size_t len,
                   size_t *out_iterations);

/**
 * Root mean squared error over the cells where `mask` is 0.
 *
 * # Safety
 * `truth` and `imputed` must hold `rows * cols` doubles, `mask` as many bytes.
 */
GiStatus gi_rmse_missing(const double *truth,
                         const double *imputed,
                         const uint8_t *mask,
                         size_t rows,
                         size_t cols,
                         double *out_rmse);

/**
 * # Safety
 * `model` must be a live handle; `path` NUL-terminated.
 */
GiStatus gi_model_save(const GiModel *model, const char *path);

/**
 * Loads a checkpoint. With a non-null `prepared`, the checkpoint's schema
 * must match the prepared dataset's.
 *
 * # Safety
 * `path` NUL-terminated; `prepared` null or live; `out_model` writable.
 */
GiStatus gi_model_load(const char *path, const GiPrepared *prepared, GiModel **out_model);

/**
 * # Safety
 * `model` must be null or a handle from this library not yet freed.
 */
void gi_model_free(GiModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GENIMPUTE_H */
