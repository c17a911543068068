#ifndef KOFUKS_H
#define KOFUKS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Status codes.
 */
typedef enum KfStatus {
  KF_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  KF_STATUS_NULL_POINTER = 1,
  /**
   * Configuration text or a string argument was malformed.
   */
  KF_STATUS_PARSE = 2,
  /**
   * A point lies outside the domain.
   */
  KF_STATUS_DOMAIN = 3,
  /**
   * A precondition on the arguments failed.
   */
  KF_STATUS_PRECONDITION = 4,
  /**
   * A numerical-quality failure (truncation, no convergence, no loop).
   */
  KF_STATUS_NUMERICAL = 5,
  KF_STATUS_IO = 6,
  /**
   * The caller's buffer is too small.
   */
  KF_STATUS_BUFFER_TOO_SMALL = 7,
  /**
   * An internal panic was caught.
   */
  KF_STATUS_PANIC = 8,
  /**
   * Index out of range.
   */
  KF_STATUS_OUT_OF_RANGE = 9,
} KfStatus;

/**
 * Domain, kernel provider and metric built from a configuration.
 */
typedef struct KfEngine KfEngine;

/**
 * A sampled geodesic.
 */
typedef struct KfTrajectory KfTrajectory;

typedef struct KfMetricSample {
  double g;
  double a_pot;
  double g_tilde;
  double g_tilde_z_re;
  double g_tilde_z_im;
  double ric;
  double err;
} KfMetricSample;

typedef struct KfState {
  double t;
  double x;
  double y;
  double vx;
  double vy;
} KfState;

typedef struct KfLoop {
  double theta;
  double t;
  double residual;
  double tangent_gap;
  double min_depth;
  bool converged;
} KfLoop;

typedef struct KfSpiralCertificate {
  double theta;
  double t0;
  double eps1;
  double horizon;
  double recurrence_gap;
  double omega_min;
  double omega_max;
  double tail_length;
  bool confinement_ok;
  bool angles_converging;
} KfSpiralCertificate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds an engine from configuration text (`key = value` lines); null or
 * empty text selects the defaults.
 *
 * # Safety
 * `config` must be null or a NUL-terminated string; `out` must be writable.
 */
enum KfStatus kf_engine_new(const char *config, struct KfEngine **out);

/**
 * # Safety
 * `e` must be null or a handle from [`kf_engine_new`] not yet freed.
 */
void kf_engine_free(struct KfEngine *e);

/**
 * Defining function value at `(x, y)`.
 *
 * # Safety
 * `e` must be a live engine and `out` writable.
 */
enum KfStatus kf_rho(const struct KfEngine *e, double x, double y, double *out);

/**
 * Bergman and Kobayashi–Fuks densities at `(x, y)`.
 *
 * # Safety
 * `e` must be a live engine and `out` writable.
 */
enum KfStatus kf_metric_sample(const struct KfEngine *e,
                               double x,
                               double y,
                               struct KfMetricSample *out);

/**
 * Integrates the geodesic from `(x, y)` with velocity `(vx, vy)` for time `t`
 * using the engine's step control.
 *
 * # Safety
 * `e` must be a live engine and `out` writable.
 */
enum KfStatus kf_geodesic(const struct KfEngine *e,
                          double x,
                          double y,
                          double vx,
                          double vy,
                          double t,
                          struct KfTrajectory **out);

/**
 * Number of stored states.
 *
 * # Safety
 * `tr` must be null or a live trajectory.
 */
size_t kf_trajectory_len(const struct KfTrajectory *tr);

/**
 * # Safety
 * `tr` must be a live trajectory and `out` writable.
 */
enum KfStatus kf_trajectory_state(const struct KfTrajectory *tr, size_t i, struct KfState *out);

/**
 * Writes the termination reason (NUL-terminated) into `buf`.
 *
 * # Safety
 * `tr` must be a live trajectory and `buf` valid for `cap` bytes.
 */
enum KfStatus kf_trajectory_termination(const struct KfTrajectory *tr, char *buf, size_t cap);

/**
 * # Safety
 * `tr` must be null or a trajectory not yet freed.
 */
void kf_trajectory_free(struct KfTrajectory *tr);

/**
 * Geodesic loop through `(x, y)` with winding vector `winding[0..n]`.
 *
 * # Safety
 * `e` must be a live engine, `winding` valid for `n` reads, `out` writable.
 */
enum KfStatus kf_find_loop(const struct KfEngine *e,
                           double x,
                           double y,
                           const int64_t *winding,
                           size_t n,
                           struct KfLoop *out);

/**
 * Spiral witness through `(x, y)` with the engine's spiral options.
 *
 * # Safety
 * `e` must be a live engine and `out` writable.
 */
enum KfStatus kf_spiral(const struct KfEngine *e,
                        double x,
                        double y,
                        struct KfSpiralCertificate *out);

/**
 * Copies the last error message of this thread into `buf` and returns the
 * number of bytes required including the terminator; nothing is written when
 * `buf` is null or too small.
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes.
 */
size_t kf_last_error(char *buf, size_t cap);

/**
 * Library version as a static NUL-terminated string.
 */
const char *kf_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KOFUKS_H */
