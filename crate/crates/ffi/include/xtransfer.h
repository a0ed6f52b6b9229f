#ifndef XTRANSFER_H
#define XTRANSFER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status codes. Values 2 to 5 match the command-line exit codes.
 */
typedef enum XtStatus {
  XT_STATUS_OK = 0,
  XT_STATUS_INTERNAL = 1,
  XT_STATUS_INVALID_ARGUMENT = 2,
  XT_STATUS_IO = 3,
  XT_STATUS_CHECKPOINT = 4,
  XT_STATUS_DEGENERATE_DATA = 5,
  XT_STATUS_NULL_POINTER = 6,
  XT_STATUS_PANIC = 7,
} XtStatus;

/*
 A labeled image set loaded from a manifest. Opaque to C.
 */
typedef struct XtDataset XtDataset;

/*
 A network. Opaque to C.
 */
typedef struct XtNet XtNet;

/*
 Ranking metrics of one evaluation.
 */
typedef struct XtEvalReport {
  double auc;
  double ap;
  double acc_at_half;
  uintptr_t n_pos;
  uintptr_t n_neg;
} XtEvalReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. The pointer
 stays valid until the next call into this library on the same thread.
 */
const char *xt_last_error_message(void);

/*
 Builds a freshly initialized network with `num_segments` segments whose
 output channels are `channels[0..num_segments]`.

 # Safety
 `channels` must point to `num_segments` values; `out` must be writable.
 */
enum XtStatus xt_net_build(uintptr_t input_channels,
                           const uintptr_t *channels,
                           uintptr_t num_segments,
                           uintptr_t kernel_size,
                           uint64_t seed,
                           struct XtNet **out);

/*
 Loads a checkpoint, inferring the architecture from its tensor shapes.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum XtStatus xt_net_load(const char *path, struct XtNet **out);

/*
 # Safety
 `net` must come from this library; `path` must be NUL-terminated.
 */
enum XtStatus xt_net_save(const struct XtNet *net, const char *path);

/*
 Number of segments, or 0 for a NULL handle.

 # Safety
 `net` must be NULL or come from this library.
 */
uintptr_t xt_net_num_segments(const struct XtNet *net);

/*
 Scores `batch` images of shape `channels x height x width`, stored
 contiguously in `pixels`, writing one probability per image to `scores`.

 # Safety
 `pixels` must hold `batch * channels * height * width` values and
 `scores` room for `batch` values.
 */
enum XtStatus xt_net_score(const struct XtNet *net,
                           const double *pixels,
                           uintptr_t batch,
                           uintptr_t channels,
                           uintptr_t height,
                           uintptr_t width,
                           double *scores);

/*
 Scores a loaded dataset and reports AUC, AP and accuracy at 0.5.

 # Safety
 Handles must come from this library; `out` must be writable.
 */
enum XtStatus xt_net_evaluate(const struct XtNet *net,
                              const struct XtDataset *data,
                              struct XtEvalReport *out);

/*
 # Safety
 `net` must be NULL or come from `xt_net_build` / `xt_net_load`, and must
 not be used afterwards.
 */
void xt_net_free(struct XtNet *net);

/*
 Loads every image listed in a manifest CSV.

 # Safety
 `manifest` must be NUL-terminated; `out` must be writable.
 */
enum XtStatus xt_dataset_load(const char *manifest, struct XtDataset **out);

/*
 Number of samples, or 0 for a NULL handle.

 # Safety
 `data` must be NULL or come from this library.
 */
uintptr_t xt_dataset_len(const struct XtDataset *data);

/*
 # Safety
 `data` must be NULL or come from `xt_dataset_load`, and must not be used
 afterwards.
 */
void xt_dataset_free(struct XtDataset *data);

/*
 Exact AUC with ties counted as one half. Labels must be 0 or 1.

 # Safety
 `scores` and `labels` must hold `n` values; `out` must be writable.
 */
enum XtStatus xt_auc_exact(const double *scores, const double *labels, uintptr_t n, double *out);

/*
 Average precision. Labels must be 0 or 1.

 # Safety
 `scores` and `labels` must hold `n` values; `out` must be writable.
 */
enum XtStatus xt_average_precision(const double *scores,
                                   const double *labels,
                                   uintptr_t n,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* XTRANSFER_H */
