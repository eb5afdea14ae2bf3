#ifndef CAVITOR_H
#define CAVITOR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CavitorStatus {
  CAVITOR_STATUS_OK = 0,
  CAVITOR_STATUS_NULL_POINTER = 1,
  CAVITOR_STATUS_INVALID_ARGUMENT = 2,
  CAVITOR_STATUS_RANGE = 3,
  CAVITOR_STATUS_NUMERICAL = 4,
  CAVITOR_STATUS_CONFIGURATION = 5,
  CAVITOR_STATUS_DOMAIN = 6,
  CAVITOR_STATUS_RESOLUTION = 7,
  CAVITOR_STATUS_INSTABILITY = 8,
  CAVITOR_STATUS_MISMATCH = 9,
  CAVITOR_STATUS_QUADRATURE = 10,
  CAVITOR_STATUS_VALIDATION = 11,
  CAVITOR_STATUS_FORMAT = 12,
  CAVITOR_STATUS_IO = 13,
  CAVITOR_STATUS_PANIC = 14,
} CavitorStatus;

// Scalar field on a grid.
typedef struct CavitorField CavitorField;

// Sampled grid on a cavity.
typedef struct CavitorGrid CavitorGrid;

// Boundary measurements.
typedef struct CavitorRecording CavitorRecording;

// Relative errors of a reconstruction against a reference field.
typedef struct CavitorMetrics {
  double l2w_rel;
  double h1_rel;
  double energy_res;
} CavitorMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *cavitor_version(void);

// Copies the last error message of this thread into `buf` (truncated and
// NUL-terminated) and returns the length it needs including the NUL.
//
// # Safety
// `buf` is null or holds `len` writable bytes.
size_t cavitor_last_error_message(char *buf, size_t len);

// `J_m(x)` for `m ≤ 200`, `0 ≤ x ≤ 10⁴`.
//
// # Safety
// `out` is null or writable.
enum CavitorStatus cavitor_bessel_j(uint32_t m, double x, double *out);

// The `k`-th positive zero of `J_m`, or of `J_m′` when `prime` is set.
//
// # Safety
// `out` is null or writable.
enum CavitorStatus cavitor_bessel_zero(uint32_t m, size_t k, bool prime, double *out);

// `I(λ, ν, ε)` for a cutoff given as `bump:0.5` or `poly5:0.3`.
//
// # Safety
// `cutoff` is a NUL-terminated string; `out` is null or writable.
enum CavitorStatus cavitor_coupling_integral(double lambda,
                                             double nu,
                                             double epsilon,
                                             const char *cutoff,
                                             double *out);

// Default grid on `geometry` (`disk`, `square`, `rect:pi,pi*sqrt(2)`):
// `resolution` cells per side, or `resolution × 2·resolution` on the disk.
//
// # Safety
// `geometry` is a NUL-terminated string; `out` is null or writable.
enum CavitorStatus cavitor_grid_new(const char *geometry,
                                    size_t resolution,
                                    struct CavitorGrid **out);

// Number of nodes, or 0 for a null grid.
//
// # Safety
// `grid` is null or a live handle.
size_t cavitor_grid_len(const struct CavitorGrid *grid);

// # Safety
// `grid` is null or a live handle, not used afterwards.
void cavitor_grid_free(struct CavitorGrid *grid);

// Samples a phantom (`three-bumps`, `eigen:K,M`, or a spec file path) on
// the nodes of `grid`.
//
// # Safety
// `grid` is a live handle, `phantom` a NUL-terminated string, `out` null or
// writable.
enum CavitorStatus cavitor_phantom_render(const struct CavitorGrid *grid,
                                          const char *phantom,
                                          struct CavitorField **out);

// Number of node values, or 0 for a null field.
//
// # Safety
// `field` is null or a live handle.
size_t cavitor_field_len(const struct CavitorField *field);

// Node values in grid order, valid until the field is freed; null for a
// null field.
//
// # Safety
// `field` is null or a live handle.
const double *cavitor_field_values(const struct CavitorField *field);

// # Safety
// `path` is a NUL-terminated string; `out` is null or writable.
enum CavitorStatus cavitor_field_read(const char *path, struct CavitorField **out);

// # Safety
// `field` is a live handle and `path` a NUL-terminated string.
enum CavitorStatus cavitor_field_write(const struct CavitorField *field, const char *path);

// # Safety
// `field` is null or a live handle, not used afterwards.
void cavitor_field_free(struct CavitorField *field);

// Runs the finite-difference forward problem from `initial` at rest for
// `duration`, sampling every `dt_record` at detectors given as a layout
// string (`full:1024`, `sides:right+top:256`, …).
//
// # Safety
// `initial` is a live handle, `detectors` a NUL-terminated string, `out`
// null or writable.
enum CavitorStatus cavitor_forward_fdtd(const struct CavitorField *initial,
                                        double duration,
                                        double dt_record,
                                        const char *detectors,
                                        struct CavitorRecording **out);

// # Safety
// `path` is a NUL-terminated string; `out` is null or writable.
enum CavitorStatus cavitor_recording_read(const char *path, struct CavitorRecording **out);

// # Safety
// `recording` is a live handle and `path` a NUL-terminated string.
enum CavitorStatus cavitor_recording_write(const struct CavitorRecording *recording,
                                           const char *path);

// Detector count, samples per detector and sampling interval.
//
// # Safety
// `recording` is a live handle; each out-pointer is null or writable.
enum CavitorStatus cavitor_recording_shape(const struct CavitorRecording *recording,
                                           size_t *n_detectors,
                                           size_t *n_samples,
                                           double *dt);

// Samples of one detector, valid until the recording is freed.
//
// # Safety
// `recording` is a live handle; `out` is null or writable.
enum CavitorStatus cavitor_recording_trace(const struct CavitorRecording *recording,
                                           size_t detector,
                                           const double **out);

// # Safety
// `recording` is null or a live handle, not used afterwards.
void cavitor_recording_free(struct CavitorRecording *recording);

// Gradual time reversal with horizon `horizon` on `grid`. When `reference`
// is non-null and `metrics` non-null, the errors against it are stored.
//
// # Safety
// `recording` and `grid` are live handles, `cutoff` a NUL-terminated
// string, `reference` null or a live handle on `grid`, `out` null or
// writable, `metrics` null or writable.
enum CavitorStatus cavitor_reconstruct(const struct CavitorRecording *recording,
                                       const struct CavitorGrid *grid,
                                       double horizon,
                                       const char *cutoff,
                                       const struct CavitorField *reference,
                                       struct CavitorField **out,
                                       struct CavitorMetrics *metrics);

// Runs a command line as the `cavitor` executable would; `argv[0]` is the
// program name.
//
// # Safety
// `argv` holds `argc` NUL-terminated strings.
enum CavitorStatus cavitor_run(int argc, const char *const *argv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAVITOR_H */
