#ifndef POSDISTILL_H
#define POSDISTILL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PdStatus {
  PD_STATUS_OK = 0,
  PD_STATUS_NULL_POINTER = 1,
  PD_STATUS_INVALID_ARGUMENT = 2,
  PD_STATUS_IO = 3,
  PD_STATUS_ARTIFACT = 4,
  PD_STATUS_AUC_UNDEFINED = 5,
  PD_STATUS_PANIC = 99,
} PdStatus;

/**
 * Opaque handle to a loaded model.
 */
typedef struct PdModel PdModel;

/**
 * Field counts a caller needs to lay out feature arrays.
 */
typedef struct PdSchema {
  size_t user_fields;
  size_t ctx_fields;
  size_t ad_fields;
  size_t max_behaviors;
  size_t num_positions;
} PdSchema;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *pd_last_error(void);

/**
 * Loads a checkpoint. On success `*out` owns a handle to release with
 * [`pd_model_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PdStatus pd_model_load(const char *path, struct PdModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or come from [`pd_model_load`], and not be freed twice.
 */
void pd_model_free(struct PdModel *model);

/**
 * # Safety
 * `model` and `out` must be valid pointers.
 */
enum PdStatus pd_model_schema(const struct PdModel *model, struct PdSchema *out);

/**
 * Serving pCTR for `n` impressions. Feature arrays are row-major
 * (`n × user_fields` and so on); `behaviors` holds every sequence back to
 * back with lengths in `behavior_lens`. No position is taken.
 *
 * # Safety
 * Every pointer must address the number of values implied by `n`, the
 * model schema and `behavior_lens`; `out` must hold `n` doubles.
 */
enum PdStatus pd_model_serve(const struct PdModel *model,
                             size_t n,
                             const size_t *user,
                             const size_t *ctx,
                             const size_t *ad,
                             const size_t *behaviors,
                             const size_t *behavior_lens,
                             double *out);

/**
 * # Safety
 * `scores` and `labels` must hold `n` values; `out` must be valid.
 */
enum PdStatus pd_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * # Safety
 * `scores` and `labels` must hold `n` values; `out` must be valid.
 */
enum PdStatus pd_logloss(const double *scores, const uint8_t *labels, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POSDISTILL_H */
