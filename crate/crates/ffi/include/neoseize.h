#ifndef NEOSEIZE_H
#define NEOSEIZE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NszMode {
  NSZ_MODE_FCN1D = 0,
  NSZ_MODE_FCN2D = 1,
} NszMode;

typedef enum NszStatus {
  NSZ_STATUS_OK = 0,
  NSZ_STATUS_NULL_POINTER = 1,
  NSZ_STATUS_INVALID_ARGUMENT = 2,
  NSZ_STATUS_IO = 3,
  NSZ_STATUS_FORMAT = 4,
  NSZ_STATUS_SHAPE = 5,
  /*
   Scores with a single label class; AUC undefined.
   */
  NSZ_STATUS_SINGLE_CLASS = 6,
  /*
   Numerical or model-state failure.
   */
  NSZ_STATUS_NUMERIC = 7,
  NSZ_STATUS_INTERNAL = 8,
} NszStatus;

/*
 Opaque trained or freshly initialised network.
 */
typedef struct NszModel NszModel;

/*
 Opaque multichannel recording.
 */
typedef struct NszRecord NszRecord;

/*
 Post-processing switches and parameters; see [`nsz_postproc_default`].
 */
typedef struct NszPostproc {
  bool fuse;
  bool smooth;
  double smooth_window_s;
  bool adapt;
  double adapt_time_constant_s;
  double adapt_beta;
  bool collar;
  double collar_s;
} NszPostproc;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread; empty after a success.
 The pointer stays valid until the next call into this library on the
 same thread.
 */
const char *nsz_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *nsz_version(void);

/*
 Receptive field in input samples (capped at the 256-sample window) of a
 default-width network.

 # Safety
 `out` must be null or point to writable memory for one `size_t`.
 */
enum NszStatus nsz_receptive_field(size_t n_blocks, size_t pool_stride, size_t *out);

/*
 Trainable parameter count of a default-width network.

 # Safety
 `out` must be null or point to writable memory for one `size_t`.
 */
enum NszStatus nsz_param_count(size_t n_blocks, size_t pool_stride, size_t *out);

/*
 Creates a freshly initialised network. `n_channels` is ignored for
 `NSZ_MODE_FCN1D`. Release with [`nsz_model_free`].

 # Safety
 `out` must be null or point to writable memory for one pointer.
 */
enum NszStatus nsz_model_build(enum NszMode mode,
                               size_t n_blocks,
                               size_t pool_stride,
                               size_t n_channels,
                               uint64_t seed,
                               struct NszModel **out);

/*
 Loads a model file. Release with [`nsz_model_free`].

 # Safety
 `path` must be null or a NUL-terminated string; `out` null or writable.
 */
enum NszStatus nsz_model_load(const char *path_, struct NszModel **out);

/*
 # Safety
 `model` must be null or a live handle; `path` null or NUL-terminated.
 */
enum NszStatus nsz_model_save(const struct NszModel *model, const char *path_);

/*
 Releases a model; null is ignored.

 # Safety
 `model` must be null or a handle from this library not yet freed.
 */
void nsz_model_free(struct NszModel *model);

/*
 Input shape of one window: channels and samples per channel.

 # Safety
 `model` must be null or a live handle; outputs null or writable.
 */
enum NszStatus nsz_model_input_shape(const struct NszModel *model,
                                     size_t *channels,
                                     size_t *samples);

/*
 # Safety
 `model` must be null or a live handle; `out` null or writable.
 */
enum NszStatus nsz_model_receptive_field(const struct NszModel *model, size_t *out);

/*
 # Safety
 `model` must be null or a live handle; `out` null or writable.
 */
enum NszStatus nsz_model_param_count(const struct NszModel *model, size_t *out);

/*
 Seizure probability of `n_windows` windows laid out as
 `[n_windows][channels][samples]`; writes `n_windows` values.

 # Safety
 `windows` must hold `n_windows * channels * samples` doubles and `out`
 `n_windows` doubles.
 */
enum NszStatus nsz_model_predict(const struct NszModel *model,
                                 const double *windows,
                                 size_t n_windows,
                                 double *out);

/*
 Per-sample seizure probability of one window `[channels][samples]`;
 writes `channels * samples` values.

 # Safety
 `window` and `out` must each hold `channels * samples` doubles.
 */
enum NszStatus nsz_model_heatmap(const struct NszModel *model, const double *window, double *out);

/*
 AUC and AUC90 in percent. `labels` are 0 or nonzero.

 # Safety
 `scores` and `labels` must hold `n` elements; outputs null or writable.
 */
enum NszStatus nsz_auc(const double *scores,
                       const uint8_t *labels,
                       size_t n,
                       double *auc,
                       double *auc90);

/*
 Default post-processing: channel max, 60 s moving average, 30 s collar.
 */
struct NszPostproc nsz_postproc_default(void);

/*
 Post-processes per-channel probabilities `[n_channels][n_epochs]`
 sampled every `period_s` seconds into one trace of `n_epochs` values.
 With `fuse` off, `n_channels` must be 1.

 # Safety
 `probs` must hold `n_channels * n_epochs` doubles, `out` `n_epochs`,
 and `config` must be null or valid.
 */
enum NszStatus nsz_postprocess(const double *probs,
                               size_t n_channels,
                               size_t n_epochs,
                               double period_s,
                               const struct NszPostproc *config,
                               double *out);

/*
 Loads a NEEG or CSV record. Release with [`nsz_record_free`].

 # Safety
 `path` must be null or NUL-terminated; `out` null or writable.
 */
enum NszStatus nsz_record_load(const char *path_, struct NszRecord **out);

/*
 Band-pass filters and resamples to 32 Hz into a new record.

 # Safety
 `record` must be null or a live handle; `out` null or writable.
 */
enum NszStatus nsz_record_preprocess(const struct NszRecord *record, struct NszRecord **out);

/*
 Releases a record; null is ignored.

 # Safety
 `record` must be null or a handle from this library not yet freed.
 */
void nsz_record_free(struct NszRecord *record);

/*
 Channel count, samples per channel and sample rate.

 # Safety
 `record` must be null or a live handle; outputs null or writable.
 */
enum NszStatus nsz_record_shape(const struct NszRecord *record,
                                size_t *n_channels,
                                size_t *n_samples,
                                double *sample_rate);

/*
 Copies channel `channel` (microvolts) into `out`, which must have room
 for `capacity >= n_samples` values.

 # Safety
 `record` must be null or a live handle; `out` must hold `capacity`
 floats.
 */
enum NszStatus nsz_record_channel(const struct NszRecord *record,
                                  size_t channel,
                                  float *out,
                                  size_t capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEOSEIZE_H */
