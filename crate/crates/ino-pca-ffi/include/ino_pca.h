/* C interface to the streaming PCA laboratory. */

#ifndef INO_PCA_H
#define INO_PCA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a fallible call. Values above `OK` describe what went wrong;
// the thread-local message from `ino_pca_last_error` has the details.
typedef enum InoPcaStatus {
  // The call succeeded.
  INO_PCA_STATUS_OK = 0,
  // A required pointer argument was null.
  INO_PCA_STATUS_NULL_POINTER = 1,
  // Arguments were structurally valid but outside the accepted domain
  // (bad spec string, non-finite number, dimension mismatch, ...).
  INO_PCA_STATUS_INVALID_ARGUMENT = 2,
  // The computation started but failed numerically (blowup, divergence).
  INO_PCA_STATUS_NUMERICAL_FAILURE = 3,
  // A string argument was not valid UTF-8.
  INO_PCA_STATUS_INVALID_UTF8 = 4,
  // An output buffer was shorter than the data it must receive.
  INO_PCA_STATUS_BUFFER_TOO_SMALL = 5,
} InoPcaStatus;

// Opaque streaming top-eigenvector estimator: a one-pass update rule plus
// its current iterate. Create with [`ino_pca_estimator_new`], feed
// observations with [`ino_pca_estimator_observe`], free with
// [`ino_pca_estimator_free`].
typedef struct InoPcaEstimator InoPcaEstimator;

// Opaque integrated overlap/norm trajectory. Create with
// [`ino_pca_ode_solve`], free with [`ino_pca_trajectory_free`].
typedef struct InoPcaTrajectory InoPcaTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Returns the message of the most recent failure on the calling thread, or
// an empty string if there was none. The pointer stays valid until the next
// failing call on the same thread.
const char *ino_pca_last_error(void);

// Smallest signal-to-noise ratio at which a fixed learning rate `tau`
// sustains a nonzero steady overlap.
double ino_pca_critical_snr(double tau);

// Greedy overlap-velocity-maximizing effective rate at overlap `q` under
// signal-to-noise ratio `omega`.
double ino_pca_optimal_rate(double omega, double q);

// Evaluates the steady state of the coupled overlap/norm flow. On success
// writes the steady overlap `Q_s`, the steady norm parameter `lambda_s`,
// and whether the learning branch is active (1) or only the zero-overlap
// branch exists (0).
//
// # Safety
// Output pointers must be valid for writing one value each (or null to
// skip that output).
enum InoPcaStatus ino_pca_steady_state(double omega,
                                       double tau,
                                       double *out_q_s,
                                       double *out_lambda_s,
                                       int *out_is_learning);

// Integrates the coupled overlap/norm flow from `(q0, lambda0)` to `t_max`
// with step `dt`. With `adaptive` nonzero the greedy rate schedule is used
// and `tau` is ignored. On success `*out` owns a new trajectory handle.
//
// # Safety
// `out` must be valid for writing one pointer.
enum InoPcaStatus ino_pca_ode_solve(double omega,
                                    double tau,
                                    int adaptive,
                                    double q0,
                                    double lambda0,
                                    double t_max,
                                    double dt,
                                    struct InoPcaTrajectory **out);

// Number of grid points in a trajectory (0 for a null handle).
//
// # Safety
// `traj` must be a live handle from [`ino_pca_ode_solve`] or null.
size_t ino_pca_trajectory_len(const struct InoPcaTrajectory *traj);

// Copies grid point `index` as `(t, Q, lambda)`.
//
// # Safety
// `traj` must be a live handle; non-null output pointers must each be valid
// for one write.
enum InoPcaStatus ino_pca_trajectory_point(const struct InoPcaTrajectory *traj,
                                           size_t index,
                                           double *out_t,
                                           double *out_q,
                                           double *out_lambda);

// Evaluates `(Q, lambda)` at time `t` by linear interpolation, clamped to
// the integrated span.
//
// # Safety
// `traj` must be a live handle; non-null output pointers must each be valid
// for one write.
enum InoPcaStatus ino_pca_trajectory_eval(const struct InoPcaTrajectory *traj,
                                          double t,
                                          double *out_q,
                                          double *out_lambda);

// Frees a trajectory handle (null is a no-op).
//
// # Safety
// `traj` must be a handle from [`ino_pca_ode_solve`] that has not been
// freed, or null.
void ino_pca_trajectory_free(struct InoPcaTrajectory *traj);

// Creates a streaming estimator.
//
// `spec` selects the update rule with the same grammar as the CLI's
// `--algo` flag — `ino[:TAU]`, `reg[:TAU]`, `oja[:TAU]`, `krasulina[:TAU]`,
// `ccipca[:AMNESIA]`, `adaoja[:B0]` — with 0.5 as the default rate for the
// rate-taking rules. The oracle-adaptive rule is rejected here: it reads
// the planted signal and is only meaningful inside simulations. `init`
// (length `dim`, `dim >= 2`) seeds the iterate; its norm must be positive.
//
// # Safety
// `spec` must be a nul-terminated string, `init` an array of `dim` doubles,
// `out` valid for writing one pointer.
enum InoPcaStatus ino_pca_estimator_new(const char *spec,
                                        const double *init,
                                        size_t dim,
                                        struct InoPcaEstimator **out);

// Advances the estimator by one observation of length `len` (must equal the
// estimator's dimension).
//
// # Safety
// `est` must be a live handle, `y` an array of `len` doubles.
enum InoPcaStatus ino_pca_estimator_observe(struct InoPcaEstimator *est,
                                            const double *y,
                                            size_t len);

// Dimension of the estimator's iterate (0 for a null handle).
//
// # Safety
// `est` must be a live handle or null.
size_t ino_pca_estimator_dimension(const struct InoPcaEstimator *est);

// Number of observations consumed so far (0 for a null handle).
//
// # Safety
// `est` must be a live handle or null.
uint64_t ino_pca_estimator_observations(const struct InoPcaEstimator *est);

// Current norm parameter λ = ‖x‖/√dim (NaN for a null handle).
//
// # Safety
// `est` must be a live handle or null.
double ino_pca_estimator_lambda(const struct InoPcaEstimator *est);

// Copies the current unit-norm component estimate into `out` (capacity
// `len >= dim`).
//
// # Safety
// `est` must be a live handle, `out` an array of at least `len` doubles.
enum InoPcaStatus ino_pca_estimator_component(const struct InoPcaEstimator *est,
                                              double *out,
                                              size_t len);

// Frees an estimator handle (null is a no-op).
//
// # Safety
// `est` must be a handle from [`ino_pca_estimator_new`] that has not been
// freed, or null.
void ino_pca_estimator_free(struct InoPcaEstimator *est);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INO_PCA_H */
