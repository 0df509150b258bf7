#ifndef RAVEN_H
#define RAVEN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every `raven_*` call.
 */
typedef enum {
  RAVEN_STATUS_OK = 0,
  /**
   * A null pointer, a bad length or a non-UTF-8 path.
   */
  RAVEN_STATUS_INVALID_ARGUMENT = 1,
  RAVEN_STATUS_IO = 2,
  /**
   * Malformed checkpoint or dataset contents.
   */
  RAVEN_STATUS_PARSE = 3,
  /**
   * Input does not fit the model (dimensions, task, ablation).
   */
  RAVEN_STATUS_MODEL = 4,
  RAVEN_STATUS_INDEX_OUT_OF_RANGE = 5,
  /**
   * The output buffer is shorter than the model output.
   */
  RAVEN_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * Internal error; the library state is unchanged.
   */
  RAVEN_STATUS_PANIC = 7,
} RavenStatus;

/**
 * Opaque loaded dataset.
 */
typedef struct RavenDataset RavenDataset;

/**
 * Opaque loaded model.
 */
typedef struct RavenModel RavenModel;

/**
 * Evaluation summary. `has_*` flags are 0 when the metric is undefined
 * (for example Pearson on constant predictions), in which case the value
 * is NaN.
 */
typedef struct {
  size_t count;
  double loss;
  double mae;
  double pearson;
  double acc2;
  double acc7;
  int32_t has_pearson;
  int32_t has_acc2;
  int32_t has_acc7;
} RavenMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next `raven_*` call on the same thread.
 */
const char *raven_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *raven_version(void);

/**
 * Loads a checkpoint written by `raven train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
RavenStatus raven_model_load(const char *path, RavenModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from [`raven_model_load`] and not be used afterwards.
 */
void raven_model_free(RavenModel *model);

/**
 * Number of values [`raven_model_predict`] writes.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
RavenStatus raven_model_output_dim(const RavenModel *model, size_t *out);

/**
 * Overrides the shift threshold β of a loaded model.
 *
 * # Safety
 * `model` must be a live handle.
 */
RavenStatus raven_model_set_beta(RavenModel *model, double beta);

/**
 * Loads a JSON-lines dataset; lines must carry inline embeddings. Frame
 * widths for imputed empty spans come from `model`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `model` a live handle; `out`
 * writable.
 */
RavenStatus raven_dataset_load(const char *path, const RavenModel *model, RavenDataset **out);

/**
 * Number of utterances; 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t raven_dataset_len(const RavenDataset *dataset);

/**
 * Releases a dataset. Null is ignored.
 *
 * # Safety
 * `dataset` must come from [`raven_dataset_load`] and not be used afterwards.
 */
void raven_dataset_free(RavenDataset *dataset);

/**
 * Writes the model output for utterance `index` into `out[0..out_len]`.
 * Regression models produce one value, multilabel models one logit per
 * class.
 *
 * # Safety
 * Handles must be live; `out` must have room for `out_len` doubles.
 */
RavenStatus raven_model_predict(const RavenModel *model,
                                const RavenDataset *dataset,
                                size_t index,
                                double *out,
                                size_t out_len);

/**
 * Evaluates the model on every utterance of `dataset` (zero predictions
 * count as positive for Acc-2).
 *
 * # Safety
 * Handles must be live; `out` writable.
 */
RavenStatus raven_model_evaluate(const RavenModel *model,
                                 const RavenDataset *dataset,
                                 size_t threads,
                                 RavenMetrics *out);

/**
 * Shifts word vector `e` by `h` with threshold `beta`:
 * `e_m = e + α·h`, `α = min(β‖e‖/‖h‖, 1)` (α = 0 when `h` is zero).
 * Writes `e_m` into `out` and α into `alpha`.
 *
 * # Safety
 * `e`, `h` and `out` must each point to `dim` doubles; `alpha` must be
 * writable.
 */
RavenStatus raven_shift_embedding(const double *e,
                                  const double *h,
                                  size_t dim,
                                  double beta,
                                  double *out,
                                  double *alpha);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RAVEN_H */
