#ifndef VOXRESP_H
#define VOXRESP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VoxStatus {
  VOX_STATUS_OK = 0,
  VOX_STATUS_NULL_POINTER = 1,
  VOX_STATUS_INVALID_ARGUMENT = 2,
  VOX_STATUS_INVALID_STATE = 3,
  VOX_STATUS_STORAGE = 4,
  VOX_STATUS_ANALYSIS = 5,
  VOX_STATUS_DEVICE = 6,
  VOX_STATUS_BUFFER_TOO_SMALL = 7,
  VOX_STATUS_PANIC = 8,
} VoxStatus;

typedef struct VoxCatalog VoxCatalog;

typedef struct VoxService VoxService;

typedef struct VoxSignal VoxSignal;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string.
 */
const char *vox_version(void);

/**
 * Status of the last failed call on this thread, `VOX_STATUS_OK` if none.
 */
enum VoxStatus vox_last_error_code(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into this library on the same thread.
 */
const char *vox_last_error_message(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void vox_string_free(char *s);

/**
 * The built-in catalog of kernel combinations (44100 Hz).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum VoxStatus vox_catalog_default(struct VoxCatalog **out);

/**
 * Load a catalog JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VoxStatus vox_catalog_load(const char *path, struct VoxCatalog **out);

/**
 * # Safety
 * `c` must come from a `vox_catalog_*` constructor and not have been freed.
 */
void vox_catalog_free(struct VoxCatalog *c);

/**
 * Generate a test signal from a JSON stimulus spec. Missing fields take
 * their default values; NULL means the default spec.
 *
 * # Safety
 * `catalog` must be a live handle, `spec_json` NULL or a NUL-terminated
 * string, and `out` a valid pointer.
 */
enum VoxStatus vox_signal_generate(const struct VoxCatalog *catalog,
                                   const char *spec_json,
                                   struct VoxSignal **out);

/**
 * Number of samples in the signal.
 *
 * # Safety
 * `s` must be a live handle.
 */
size_t vox_signal_len(const struct VoxSignal *s);

/**
 * Copy the waveform (`which` = 0) or the modulation in cents (`which` = 1)
 * into `buf`. `written` receives the full length even when `cap` is too small.
 *
 * # Safety
 * `s` must be a live handle, `buf` must hold `cap` doubles, `written` valid.
 */
enum VoxStatus vox_signal_copy(const struct VoxSignal *s,
                               uint32_t which,
                               double *buf,
                               size_t cap,
                               size_t *written);

/**
 * # Safety
 * `s` must come from [`vox_signal_generate`] and not have been freed.
 */
void vox_signal_free(struct VoxSignal *s);

/**
 * f_o of one analysis segment (`n` samples, window length `n - 1`) searched
 * in `[lo, hi]` Hz.
 *
 * # Safety
 * `samples` must hold `n` doubles; the out pointers must be valid.
 */
enum VoxStatus vox_fo_estimate(const double *samples,
                               size_t n,
                               double fs,
                               double lo,
                               double hi,
                               double *fo_hz,
                               double *quality);

/**
 * Analyze a stereo WAV (voice, loop-back). The spec comes from `spec_json`
 * or, when NULL, from the sidecar next to the file. `out_json` receives the
 * result document.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum VoxStatus vox_analyze_wav(const struct VoxCatalog *catalog,
                               const char *wav_path,
                               const char *spec_json,
                               char **out_json);

/**
 * Open a control service on the simulated device. `speed` scales the device
 * clock relative to real time.
 *
 * # Safety
 * `root` must be NUL-terminated and `out` valid.
 */
enum VoxStatus vox_service_open(const char *root, double speed, struct VoxService **out);

/**
 * Execute one protocol message; `out_reply` receives the reply JSON. A
 * refused command still returns `VOX_STATUS_OK` with `"ok": false` inside.
 *
 * # Safety
 * Pointers must be valid; `request` NUL-terminated.
 */
enum VoxStatus vox_service_handle(struct VoxService *svc, const char *request, char **out_reply);

/**
 * Advance loops and analyses; `out_events` receives a JSON array of events.
 *
 * # Safety
 * Pointers must be valid.
 */
enum VoxStatus vox_service_poll(struct VoxService *svc, char **out_events);

/**
 * # Safety
 * `svc` must come from [`vox_service_open`] and not have been freed.
 */
void vox_service_free(struct VoxService *svc);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOXRESP_H */
