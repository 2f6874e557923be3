#ifndef SEQFUSE_H
#define SEQFUSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum SfStatus {
  SF_STATUS_OK = 0,
  SF_STATUS_NULL_POINTER = 1,
  SF_STATUS_INVALID_ARGUMENT = 2,
  SF_STATUS_IO = 3,
  // Malformed `.embs` or model file.
  SF_STATUS_FORMAT = 4,
  SF_STATUS_DIMENSION = 5,
  // Caller buffer too small; the needed size is reported where possible.
  SF_STATUS_BUFFER_TOO_SMALL = 6,
  SF_STATUS_PANIC = 7,
} SfStatus;

// Loaded model, immutable after loading.
typedef struct SfModel SfModel;

// One embedding sequence.
typedef struct SfSequence SfSequence;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *sf_version(void);

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call into the library from this thread.
const char *sf_last_error_message(void);

// Loads a model file. On success `*out` owns a handle for `sf_model_free`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum SfStatus sf_model_load(const char *path, struct SfModel **out);

// # Safety
// `model` must come from `sf_model_load` and not be used afterwards. Null is ignored.
void sf_model_free(struct SfModel *model);

// Input width, padded length and class count of a model. Any output pointer may be null.
//
// # Safety
// `model` must be a live handle; non-null outputs must be valid.
enum SfStatus sf_model_info(const struct SfModel *model,
                            uint32_t *input_dim,
                            uint32_t *max_len,
                            uint32_t *classes);

// Eval-mode prediction for one sequence.
//
// `probs` receives one probability per class and must hold at least the
// class count. `importance` (may be null when `importance_len` is 0)
// receives the per-position attention importance, `max_len` values; it is
// zero-filled for models without attention.
//
// # Safety
// Handles must be live; buffers must hold the stated lengths.
enum SfStatus sf_model_predict(const struct SfModel *model,
                               const struct SfSequence *sequence,
                               double threshold,
                               double *probs,
                               size_t probs_len,
                               uint32_t *class_out,
                               double *importance,
                               size_t importance_len);

// Reads an `.embs` file.
//
// # Safety
// `path` must be NUL-terminated and `out` valid.
enum SfStatus sf_sequence_read(const char *path, struct SfSequence **out);

// Builds a sequence from `n_frames` timestamps and a row-major
// `n_frames × dim` payload. `label` −1 means unlabelled.
//
// # Safety
// `video_id` must be NUL-terminated; arrays must hold the stated lengths.
enum SfStatus sf_sequence_new(const char *video_id,
                              uint32_t dim,
                              uint32_t n_frames,
                              const double *timestamps,
                              const float *data,
                              int32_t label,
                              struct SfSequence **out);

// # Safety
// `sequence` must be live and `path` NUL-terminated.
enum SfStatus sf_sequence_write(const struct SfSequence *sequence, const char *path);

// # Safety
// `sequence` must come from this library and not be used afterwards. Null is ignored.
void sf_sequence_free(struct SfSequence *sequence);

// Frame count, or 0 for a null handle.
//
// # Safety
// `sequence` must be live or null.
size_t sf_sequence_len(const struct SfSequence *sequence);

// Feature width, or 0 for a null handle.
//
// # Safety
// `sequence` must be live or null.
size_t sf_sequence_dim(const struct SfSequence *sequence);

// Class label, −1 when unlabelled or for a null handle.
//
// # Safety
// `sequence` must be live or null.
int32_t sf_sequence_label(const struct SfSequence *sequence);

// Copies the video id with a trailing NUL. `*needed` (if non-null) gets
// the required size including the NUL, also when the buffer is too small.
//
// # Safety
// `buf` must hold `len` bytes.
enum SfStatus sf_sequence_video_id(const struct SfSequence *sequence,
                                   char *buf,
                                   size_t len,
                                   size_t *needed);

// Copies all frame timestamps; `len` must be at least the frame count.
//
// # Safety
// `out` must hold `len` doubles.
enum SfStatus sf_sequence_timestamps(const struct SfSequence *sequence, double *out, size_t len);

// Copies frame `index`'s vector; `len` must be at least the feature width.
//
// # Safety
// `out` must hold `len` floats.
enum SfStatus sf_sequence_frame(const struct SfSequence *sequence,
                                size_t index,
                                float *out,
                                size_t len);

// Daily frame selection over `n` strictly increasing timestamps. Writes at
// most `max_frames` source positions into `indices` (capacity
// `max_frames`) and their count into `*n_selected`.
//
// # Safety
// `timestamps` must hold `n` doubles and `indices` `max_frames` entries.
enum SfStatus sf_select_frames(const double *timestamps,
                               size_t n,
                               double delta_t,
                               size_t max_frames,
                               size_t *indices,
                               size_t *n_selected);

// Blastocyst label (1) or not (0) from `n` stage codes such as `"tB"`
// with their hours.
//
// # Safety
// `stage_codes` must hold `n` NUL-terminated strings and `hours` `n` doubles.
enum SfStatus sf_derive_label(const char *const *stage_codes,
                              const double *hours,
                              size_t n,
                              uint32_t *label);

// Trapezoidal ROC AUC of `n` scores against 0/1 labels.
//
// # Safety
// `scores` and `labels` must hold `n` entries; `auc` must be valid.
enum SfStatus sf_roc_auc(const double *scores, const uint32_t *labels, size_t n, double *auc);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEQFUSE_H */
