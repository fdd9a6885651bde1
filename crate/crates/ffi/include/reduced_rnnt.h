#ifndef REDUCED_RNNT_H
#define REDUCED_RNNT_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum RrntStatus {
  RRNT_STATUS_OK = 0,
  RRNT_STATUS_SHAPE = 1,
  RRNT_STATUS_DOMAIN = 2,
  RRNT_STATUS_CONFIG = 3,
  RRNT_STATUS_CAPACITY = 4,
  RRNT_STATUS_STATE = 5,
  RRNT_STATUS_DIVERGENCE = 6,
  RRNT_STATUS_SCHEMA = 7,
  RRNT_STATUS_UNSUPPORTED_FORMAT = 8,
  RRNT_STATUS_CORRUPT = 9,
  RRNT_STATUS_VALIDATION = 10,
  RRNT_STATUS_IO = 11,
  RRNT_STATUS_NULL_POINTER = 12,
  RRNT_STATUS_INVALID_UTF8 = 13,
  RRNT_STATUS_BUFFER_TOO_SMALL = 14,
  RRNT_STATUS_PANIC = 15,
} RrntStatus;

// Opaque decoder handle.
typedef struct RrntModel RrntModel;

// Opaque n-best list returned by beam search.
typedef struct RrntNBest RrntNBest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next call on the same thread.
const char *rrnt_last_error(void);

// Loads a model archive from `path`.
//
// # Safety
// `path` must be a nul-terminated string and `out` a writable pointer.
enum RrntStatus rrnt_model_load(const char *path, struct RrntModel **out);

// Creates a randomly initialised decoder. `config_json` is either a preset
// name such as `ReducedSmall` or a JSON decoder config object.
//
// # Safety
// `config_json` must be a nul-terminated string and `out` a writable pointer.
enum RrntStatus rrnt_model_init(const char *config_json, uint64_t seed, struct RrntModel **out);

// Writes the model to `path`; `use_f32` stores 32-bit floats.
//
// # Safety
// `model` must come from this library and `path` be nul-terminated.
enum RrntStatus rrnt_model_save(const struct RrntModel *model, const char *path, bool use_f32);

// Releases a model. NULL is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void rrnt_model_free(struct RrntModel *model);

// Trainable plus frozen parameter count, excluding the pad row.
//
// # Safety
// `model` must come from this library and `out` be writable.
enum RrntStatus rrnt_model_param_count(const struct RrntModel *model, uint64_t *out);

// Width of the encoder frames the model consumes.
//
// # Safety
// `model` must come from this library or be NULL (returns 0).
size_t rrnt_model_encoder_dim(const struct RrntModel *model);

// Number of output labels, blank excluded.
//
// # Safety
// `model` must come from this library or be NULL (returns 0).
size_t rrnt_model_vocab_size(const struct RrntModel *model);

// Greedy search over `num_frames × dim` row-major encoder frames.
// `labels_len` always receives the transcript length; when it exceeds
// `labels_cap` the call fails with `RRNT_STATUS_BUFFER_TOO_SMALL`.
//
// # Safety
// `frames` must hold `num_frames * dim` values, `labels` `labels_cap` slots.
enum RrntStatus rrnt_decode_greedy(const struct RrntModel *model,
                                   const double *frames,
                                   size_t num_frames,
                                   size_t dim,
                                   uint32_t *labels,
                                   size_t labels_cap,
                                   size_t *labels_len,
                                   double *log_prob);

// Beam search; the n-best list is sorted by descending log-probability.
//
// # Safety
// `frames` must hold `num_frames * dim` values and `out` be writable.
enum RrntStatus rrnt_decode_beam(const struct RrntModel *model,
                                 const double *frames,
                                 size_t num_frames,
                                 size_t dim,
                                 size_t beam_width,
                                 struct RrntNBest **out);

// Number of hypotheses in the list.
//
// # Safety
// `nbest` must come from this library or be NULL (returns 0).
size_t rrnt_nbest_len(const struct RrntNBest *nbest);

// Copies hypothesis `index` out of the list, with the same buffer protocol
// as `rrnt_decode_greedy`.
//
// # Safety
// `nbest` must come from this library and `labels` hold `labels_cap` slots.
enum RrntStatus rrnt_nbest_get(const struct RrntNBest *nbest,
                               size_t index,
                               uint32_t *labels,
                               size_t labels_cap,
                               size_t *labels_len,
                               double *log_prob);

// Releases an n-best list. NULL is ignored.
//
// # Safety
// `nbest` must come from this library and not be used afterwards.
void rrnt_nbest_free(struct RrntNBest *nbest);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REDUCED_RNNT_H */
