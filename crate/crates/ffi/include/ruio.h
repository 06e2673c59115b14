#ifndef RUIO_H
#define RUIO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible entry point.
 */
typedef enum RuioStatus {
  RUIO_STATUS_OK = 0,
  RUIO_STATUS_NULL_POINTER = 1,
  RUIO_STATUS_INVALID_ARGUMENT = 2,
  RUIO_STATUS_DIMENSION_MISMATCH = 3,
  RUIO_STATUS_PARSE = 4,
  /*
   The data or model admits no observer (rank or kernel conditions fail).
   */
  RUIO_STATUS_EXISTENCE = 5,
  /*
   Observers exist but none of them is Schur stable.
   */
  RUIO_STATUS_STABILIZATION = 6,
  RUIO_STATUS_NUMERICS = 7,
  RUIO_STATUS_BUFFER_TOO_SMALL = 8,
  RUIO_STATUS_PANIC = 9,
} RuioStatus;

/*
 An observer together with its running state `z`.
 */
typedef struct RuioEstimator RuioEstimator;

/*
 A designed observer.
 */
typedef struct RuioObserver RuioObserver;

/*
 Plant `x+ = A x + B u + E d`, `y = C x`.
 */
typedef struct RuioSystem RuioSystem;

/*
 Recorded input, disturbance, state and output samples.
 */
typedef struct RuioTrajectory RuioTrajectory;

/*
 Design tolerances; see [`ruio_design_config_default`].
 */
typedef struct RuioDesignConfig {
  double rank_rtol;
  double residual_tol;
  double stability_margin;
} RuioDesignConfig;

/*
 Dimensions of an observer.
 */
typedef struct RuioObserverDims {
  /*
   Plant state dimension.
   */
  size_t n;
  /*
   Input dimension.
   */
  size_t m;
  /*
   Length of the measured output vector.
   */
  size_t p;
  /*
   Observer order `n - rank(C)`.
   */
  size_t order;
} RuioObserverDims;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the message of the last failed call on this thread into `buf`.

 Returns the number of bytes needed including the terminator, or 0 when
 the last call succeeded. Passing a null `buf` only queries the size.
 */
size_t ruio_last_error_message(char *buf, size_t len);

/*
 Library defaults for the design tolerances.
 */
struct RuioDesignConfig ruio_design_config_default(void);

/*
 Builds a plant from row-major `A` (n x n), `B` (n x m), `E` (n x q) and
 `C` (p x n).
 */
enum RuioStatus ruio_system_new(size_t n,
                                size_t m,
                                size_t q,
                                size_t p,
                                const double *a,
                                const double *b,
                                const double *e,
                                const double *c,
                                struct RuioSystem **out);

/*
 Parses a plant from the JSON system format used by the CLI.
 */
enum RuioStatus ruio_system_from_json(const char *json, struct RuioSystem **out);

/*
 Writes `n`, `m`, `q`, `p`; any output pointer may be null.
 */
enum RuioStatus ruio_system_dims(const struct RuioSystem *sys,
                                 size_t *n,
                                 size_t *m,
                                 size_t *q,
                                 size_t *p);

void ruio_system_free(struct RuioSystem *sys);

/*
 Simulates a randomly excited experiment with `samples` recorded states,
 inputs in [-5, 5] and disturbances in [-2, 2].
 */
enum RuioStatus ruio_trajectory_generate(const struct RuioSystem *sys,
                                         size_t samples,
                                         uint64_t seed,
                                         struct RuioTrajectory **out);

/*
 Parses a trajectory from the CSV format used by the CLI.
 */
enum RuioStatus ruio_trajectory_from_csv(const char *csv, struct RuioTrajectory **out);

/*
 Serializes a trajectory as CSV. See [`ruio_observer_to_json`] for the
 buffer protocol.
 */
enum RuioStatus ruio_trajectory_to_csv(const struct RuioTrajectory *traj,
                                       char *buf,
                                       size_t len,
                                       size_t *required);

/*
 Number of recorded output samples `N + 1`.
 */
enum RuioStatus ruio_trajectory_samples(const struct RuioTrajectory *traj, size_t *samples);

void ruio_trajectory_free(struct RuioTrajectory *traj);

/*
 Designs an observer from recorded data. `cfg` may be null for defaults.
 */
enum RuioStatus ruio_design_from_trajectory(const struct RuioTrajectory *traj,
                                            const struct RuioDesignConfig *cfg,
                                            struct RuioObserver **out);

/*
 Designs an observer from known plant matrices. `cfg` may be null.
 */
enum RuioStatus ruio_design_from_model(const struct RuioSystem *sys,
                                       const struct RuioDesignConfig *cfg,
                                       struct RuioObserver **out);

/*
 Parses an observer from the JSON format written by `ruio design`.
 */
enum RuioStatus ruio_observer_from_json(const char *json, struct RuioObserver **out);

/*
 Serializes an observer as JSON into `buf`.

 `required` (nullable) receives the size including the terminator. When
 `buf` is null or shorter than that, nothing is written and
 `RuioStatus::BufferTooSmall` is returned.
 */
enum RuioStatus ruio_observer_to_json(const struct RuioObserver *obs,
                                      char *buf,
                                      size_t len,
                                      size_t *required);

enum RuioStatus ruio_observer_dims(const struct RuioObserver *obs, struct RuioObserverDims *dims);

/*
 Spectral radius of the observer state matrix.
 */
enum RuioStatus ruio_observer_spectral_radius(const struct RuioObserver *obs, double *rho);

/*
 Copies the row-major `order x order` observer state matrix into `out`.
 */
enum RuioStatus ruio_observer_state_matrix(const struct RuioObserver *obs, double *out, size_t len);

void ruio_observer_free(struct RuioObserver *obs);

/*
 Starts an estimator from `z = 0`. The observer is copied, so it may be
 freed afterwards.
 */
enum RuioStatus ruio_estimator_new(const struct RuioObserver *obs, struct RuioEstimator **out);

/*
 Sets `z` to the `order` values in `z`, or to zero when `z` is null.
 */
enum RuioStatus ruio_estimator_reset(struct RuioEstimator *est, const double *z, size_t len);

/*
 Writes the estimate `x̂(t)` for the current `z` and output `y(t)`, then
 advances `z` with `u(t)`. `xhat` must hold `n` values.
 */
enum RuioStatus ruio_estimator_step(struct RuioEstimator *est,
                                    const double *u,
                                    size_t u_len,
                                    const double *y,
                                    size_t y_len,
                                    double *xhat,
                                    size_t xhat_len);

/*
 Writes the estimate for output `y` without advancing the state.
 */
enum RuioStatus ruio_estimator_estimate(const struct RuioEstimator *est,
                                        const double *y,
                                        size_t y_len,
                                        double *xhat,
                                        size_t xhat_len);

void ruio_estimator_free(struct RuioEstimator *est);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RUIO_H */
