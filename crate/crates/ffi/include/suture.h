#ifndef SUTURE_H
#define SUTURE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum SutureStatus {
  SUTURE_STATUS_OK = 0,
  SUTURE_STATUS_NULL_POINTER = 1,
  SUTURE_STATUS_INVALID_UTF8 = 2,
  // Scenario text did not parse or failed validation.
  SUTURE_STATUS_PARSE = 3,
  // Initial state violates a barrier constraint.
  SUTURE_STATUS_SAFETY = 4,
  // The simulation step failed.
  SUTURE_STATUS_RUNTIME = 5,
  // Output buffer shorter than required.
  SUTURE_STATUS_BUFFER_TOO_SMALL = 6,
  SUTURE_STATUS_UNKNOWN_PRESET = 7,
  SUTURE_STATUS_INVALID_ARGUMENT = 8,
  SUTURE_STATUS_PANIC = 9,
} SutureStatus;

typedef enum SutureQpStatus {
  SUTURE_QP_STATUS_OPTIMAL = 0,
  SUTURE_QP_STATUS_MAX_ITERS = 1,
  SUTURE_QP_STATUS_INFEASIBLE = 2,
} SutureQpStatus;

typedef enum SutureColorKind {
  SUTURE_COLOR_KIND_GREEN = 0,
  SUTURE_COLOR_KIND_ORANGE = 1,
  SUTURE_COLOR_KIND_BLUE = 2,
} SutureColorKind;

// Opaque simulation handle.
typedef struct SutureSim SutureSim;

// Diagnostics of the last tick.
typedef struct SutureStepInfo {
  double time;
  double tick_seconds;
  uint64_t qp_iterations;
  enum SutureQpStatus qp_status;
  // Non-zero when the QP did not reach optimality.
  uint8_t degraded;
  size_t friction_count;
  // m²
  double min_h_con;
  // m²/s
  double slack_con;
} SutureStepInfo;

// Colour of one slot. `intensity` is in [0, 1] for orange and 0 otherwise.
typedef struct SutureColor {
  enum SutureColorKind kind;
  double intensity;
} SutureColor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a simulation from scenario TOML. A `script_file` reference is
// not resolved; scripts must be inline.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer. On
// success `*out` owns a handle to release with [`suture_sim_free`].
enum SutureStatus suture_sim_from_toml(const char *toml, struct SutureSim **out);

// Creates a simulation from a built-in preset (`straight`, `collision`,
// `hernia`, `silk`).
//
// # Safety
// As for [`suture_sim_from_toml`].
enum SutureStatus suture_sim_from_preset(const char *name, struct SutureSim **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `sim` must come from a constructor above and not be used afterwards.
void suture_sim_free(struct SutureSim *sim);

// Advances one tick with needle velocity `(vx, vy)` in m/s. `info` may be
// null.
//
// # Safety
// `sim` must be a live handle; `info`, if non-null, must be writable.
enum SutureStatus suture_sim_step(struct SutureSim *sim,
                                  double vx,
                                  double vy,
                                  struct SutureStepInfo *info);

// Number of thread nodes `n`, or 0 for a null handle.
//
// # Safety
// `sim` must be null or a live handle.
size_t suture_sim_node_count(const struct SutureSim *sim);

// Number of obstacles, or 0 for a null handle.
//
// # Safety
// `sim` must be null or a live handle.
size_t suture_sim_obstacle_count(const struct SutureSim *sim);

// Simulated time in seconds, or 0 for a null handle.
//
// # Safety
// `sim` must be null or a live handle.
double suture_sim_time(const struct SutureSim *sim);

// Writes `2·(n+1)` doubles: needle `x, y`, then each node.
//
// # Safety
// `sim` must be a live handle and `xy` writable for `len` doubles.
enum SutureStatus suture_sim_positions(const struct SutureSim *sim, double *xy, size_t len);

// Writes `n+1` colours, needle first.
//
// # Safety
// `sim` must be a live handle and `colors` writable for `len` entries.
enum SutureStatus suture_sim_colors(const struct SutureSim *sim,
                                    struct SutureColor *colors,
                                    size_t len);

// Writes the minimum obstacle barrier value per obstacle (m²) over the
// needle and all nodes.
//
// # Safety
// `sim` must be a live handle and `out` writable for `len` doubles.
enum SutureStatus suture_sim_min_h_obs(const struct SutureSim *sim, double *out, size_t len);

// Copies the calling thread's last error message into `buf` (NUL
// terminated, truncated to fit) and returns the full message length in
// bytes excluding the terminator. Returns 0 when there is no error.
//
// # Safety
// `buf` must be null or writable for `len` bytes.
size_t suture_last_error(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *suture_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SUTURE_H */
