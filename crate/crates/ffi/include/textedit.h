#ifndef TEXTEDIT_H
#define TEXTEDIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum TeStatus {
  TE_STATUS_OK = 0,
  // A required pointer was null or a string was not UTF-8.
  TE_STATUS_NULL_OR_INVALID_ARGUMENT = 1,
  // Input rejected by validation (bad shape, unknown kind, out-of-range index, ...).
  TE_STATUS_VALIDATION = 2,
  // File could not be read or written.
  TE_STATUS_IO = 3,
  // Malformed checkpoint, image or JSON.
  TE_STATUS_FORMAT = 4,
  // Numerical or backend failure while running.
  TE_STATUS_RUNTIME = 5,
  // A caller-provided buffer is too small.
  TE_STATUS_BUFFER_TOO_SMALL = 6,
  // Internal panic; the handle involved should be treated as unusable.
  TE_STATUS_PANIC = 7,
} TeStatus;

// How branch outputs are combined.
typedef enum TeReadout {
  TE_READOUT_FUSION = 0,
  TE_READOUT_ARGMAX = 1,
} TeReadout;

// Opaque RGB image with values in [0, 1].
typedef struct TeImage TeImage;

// Opaque loaded model.
typedef struct TeModel TeModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or an empty string. The pointer stays
// valid until the next failing call on the same thread.
const char *te_last_error(void);

// Library version as a static NUL-terminated string.
const char *te_version(void);

// Loads a checkpoint. On success `*out` owns a model to release with `te_model_free`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum TeStatus te_model_load(const char *path, struct TeModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from `te_model_load` and not be used afterwards.
void te_model_free(struct TeModel *model);

// Model kind (`bucket`, `e2e` or `filterbank`), valid while the model lives.
//
// # Safety
// `model` must be a live model handle and `out` a valid pointer.
enum TeStatus te_model_kind(const struct TeModel *model, const char **out);

// Number of buckets or filters (1 for the end-to-end model).
//
// # Safety
// `model` must be a live model handle and `out` a valid pointer.
enum TeStatus te_model_branches(const struct TeModel *model, size_t *out);

// Builds an image from tightly packed 8-bit RGB rows (`width * height * 3` bytes).
//
// # Safety
// `data` must point to at least `len` readable bytes and `out` must be valid.
enum TeStatus te_image_from_rgb8(const uint8_t *data,
                                 size_t len,
                                 size_t width,
                                 size_t height,
                                 struct TeImage **out);

// Reads a PNG or JPEG file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum TeStatus te_image_load(const char *path, struct TeImage **out);

// Writes PNG or JPEG, chosen by the file extension.
//
// # Safety
// `image` must be a live image handle and `path` a NUL-terminated string.
enum TeStatus te_image_save(const struct TeImage *image, const char *path);

// Width and height in pixels.
//
// # Safety
// `image` must be a live image handle; `width` and `height` valid pointers.
enum TeStatus te_image_size(const struct TeImage *image, size_t *width, size_t *height);

// Copies the image as packed 8-bit RGB into `buf`, which must hold `width * height * 3`
// bytes.
//
// # Safety
// `image` must be a live image handle and `buf` must point to `len` writable bytes.
enum TeStatus te_image_to_rgb8(const struct TeImage *image, uint8_t *buf, size_t len);

// Releases an image. Null is ignored.
//
// # Safety
// `image` must come from this library and not be used afterwards.
void te_image_free(struct TeImage *image);

// Edits `image` following `text`. The result keeps the input's size.
//
// When `weights` is non-null the branch weights are written there; `weights_len` must be at
// least `te_model_branches`. Pass null and 0 to skip them.
//
// # Safety
// Handles must be live, `text` NUL-terminated, `out` valid, and `weights` (if non-null)
// must point to `weights_len` writable doubles.
enum TeStatus te_edit(const struct TeModel *model,
                      const struct TeImage *image,
                      const char *text,
                      enum TeReadout readout,
                      struct TeImage **out,
                      double *weights,
                      size_t weights_len);

// Output of filter `k` alone (filter-bank models only).
//
// # Safety
// Handles must be live and `out` valid.
enum TeStatus te_probe(const struct TeModel *model,
                       const struct TeImage *image,
                       size_t k,
                       struct TeImage **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TEXTEDIT_H */
