#ifndef CLAPS_H
#define CLAPS_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum ClapsStatus {
  CLAPS_STATUS_OK = 0,
  CLAPS_STATUS_NULL_POINTER = 1,
  CLAPS_STATUS_INVALID_ARGUMENT = 2,
  CLAPS_STATUS_DOMAIN = 3,
  CLAPS_STATUS_SINGULAR = 4,
  CLAPS_STATUS_VACUOUS = 5,
  CLAPS_STATUS_KIND_MISMATCH = 6,
  CLAPS_STATUS_EMPTY = 7,
  CLAPS_STATUS_SCHEMA = 8,
  CLAPS_STATUS_IO = 9,
  CLAPS_STATUS_PANIC = 10,
  CLAPS_STATUS_OTHER = 11,
} ClapsStatus;

typedef enum ClapsPredictorKind {
  CLAPS_PREDICTOR_KIND_INEKF = 0,
  CLAPS_PREDICTOR_KIND_SS_EKF = 1,
} ClapsPredictorKind;

typedef enum ClapsNoiseTiming {
  CLAPS_NOISE_TIMING_PER_SUBSTEP = 0,
  CLAPS_NOISE_TIMING_HELD = 1,
} ClapsNoiseTiming;

typedef enum ClapsFrame {
  CLAPS_FRAME_EXP_COORDS_LEFT = 0,
  CLAPS_FRAME_GENERALIZED = 1,
} ClapsFrame;

typedef enum ClapsScoreKind {
  CLAPS_SCORE_KIND_MAHALANOBIS_LIE = 0,
  CLAPS_SCORE_KIND_MAHALANOBIS_SS = 1,
  CLAPS_SCORE_KIND_L2_SS = 2,
  CLAPS_SCORE_KIND_L2_LIE = 3,
} ClapsScoreKind;

/**
 * Opaque calibration result.
 */
typedef struct ClapsCalibration ClapsCalibration;

/**
 * Opaque one-step predictor.
 */
typedef struct ClapsPredictor ClapsPredictor;

/**
 * Pose `(x, y, theta)` and body twist `(vx, vy, wz)`.
 */
typedef struct ClapsState {
  double pose[3];
  double twist[3];
} ClapsState;

/**
 * Mean state and row-major 3x3 pose covariance.
 */
typedef struct ClapsPrediction {
  struct ClapsState mean;
  double cov[9];
  enum ClapsFrame frame;
} ClapsPrediction;

/**
 * One observed transition under the wrench `u = (fx, tz)`.
 */
typedef struct ClapsRecord {
  struct ClapsState s0;
  double u[2];
  struct ClapsState s1;
} ClapsRecord;

/**
 * Library version as a static NUL-terminated string.
 */
const char *claps_version(void);

/**
 * Message of the last failure on this thread, or NULL. Valid until the next
 * failing call on the same thread.
 */
const char *claps_last_error(void);

/**
 * `exp` of the algebra vector `v = (rho_x, rho_y, theta)`.
 *
 * # Safety
 * `v` must point to 3 doubles and `pose_out` to room for 3.
 */
enum ClapsStatus claps_se2_exp(const double *v, double *pose_out);

/**
 * `log` of a pose; fails with `CLAPS_STATUS_DOMAIN` at `|theta| = pi`.
 *
 * # Safety
 * `pose` must point to 3 doubles and `v_out` to room for 3.
 */
enum ClapsStatus claps_se2_log(const double *pose, double *v_out);

/**
 * Predictor with the given model inertia (row-major 3x3), wrench noise
 * covariance (row-major 2x2), substep rate and horizon.
 *
 * # Safety
 * `inertia` must point to 9 doubles, `q0` to 4, `out_handle` must be valid.
 */
enum ClapsStatus claps_predictor_new(enum ClapsPredictorKind kind,
                                     const double *inertia,
                                     const double *q0,
                                     enum ClapsNoiseTiming timing,
                                     double substep_hz,
                                     double horizon,
                                     struct ClapsPredictor **out_handle);

/**
 * # Safety
 * `handle` must come from `claps_predictor_new` (or be NULL) and not be used afterwards.
 */
void claps_predictor_free(struct ClapsPredictor *handle);

/**
 * One-step Gaussian prediction from `s0` under the wrench `u = (fx, tz)`.
 *
 * # Safety
 * All pointers must be valid; `u` points to 2 doubles.
 */
enum ClapsStatus claps_predict(const struct ClapsPredictor *handle,
                               const struct ClapsState *s0,
                               const double *u,
                               struct ClapsPrediction *pred_out);

/**
 * Split-conformal calibration of `predictor` on `n` records.
 *
 * # Safety
 * `records` must point to `n` records; other pointers must be valid.
 */
enum ClapsStatus claps_calibrate(const struct ClapsPredictor *predictor,
                                 const struct ClapsRecord *records,
                                 size_t n,
                                 double alpha,
                                 enum ClapsScoreKind kind,
                                 struct ClapsCalibration **out_handle);

/**
 * Loads a calibration from its JSON form.
 *
 * # Safety
 * `json` must be a NUL-terminated UTF-8 string.
 */
enum ClapsStatus claps_calibration_from_json(const char *json,
                                             struct ClapsCalibration **out_handle);

/**
 * JSON form of a calibration; release with `claps_string_free`.
 *
 * # Safety
 * `handle` and `json_out` must be valid.
 */
enum ClapsStatus claps_calibration_to_json(const struct ClapsCalibration *handle, char **json_out);

/**
 * # Safety
 * `s` must come from this library (or be NULL).
 */
void claps_string_free(char *s);

/**
 * # Safety
 * `handle` must come from this library (or be NULL) and not be used afterwards.
 */
void claps_calibration_free(struct ClapsCalibration *handle);

/**
 * Calibrated radius; `INFINITY` when vacuous.
 *
 * # Safety
 * `handle` must be valid or NULL (NULL returns NaN).
 */
double claps_calibration_q_hat(const struct ClapsCalibration *handle);

/**
 * Covariance scaling `q_hat^2 / chi2`.
 *
 * # Safety
 * `handle` must be valid or NULL (NULL returns NaN).
 */
double claps_calibration_zeta(const struct ClapsCalibration *handle);

/**
 * # Safety
 * `handle` must be valid or NULL (NULL returns false).
 */
bool claps_calibration_is_vacuous(const struct ClapsCalibration *handle);

/**
 * Nonconformity score of `truth` (pose, 3 doubles) against a prediction.
 *
 * # Safety
 * All pointers must be valid.
 */
enum ClapsStatus claps_score(enum ClapsScoreKind kind,
                             const double *truth,
                             const struct ClapsPrediction *pred,
                             double *score_out);

/**
 * Membership of `query` (pose, 3 doubles) in the calibrated region.
 *
 * # Safety
 * All pointers must be valid.
 */
enum ClapsStatus claps_contains(const struct ClapsCalibration *cal,
                                const struct ClapsPrediction *pred,
                                const double *query,
                                bool *inside_out);

/**
 * Configuration-space volume of the region, from a closed mesh over
 * `n_samples` boundary points.
 *
 * # Safety
 * All pointers must be valid.
 */
enum ClapsStatus claps_region_volume(const struct ClapsCalibration *cal,
                                     const struct ClapsPrediction *pred,
                                     size_t n_samples,
                                     double *volume_out);

#endif  /* CLAPS_H */
