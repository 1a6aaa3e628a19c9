//! C ABI over `claps-core`.
//!
//! Handles are opaque heap objects released with their `_free` function.
//! Every fallible call returns a [`ClapsStatus`]; on failure the message is
//! available from [`claps_last_error`] until the next failing call on the
//! same thread. Panics are caught at the boundary and reported as
//! `CLAPS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use claps::conformal::{self, CalibrationResult, ScoreKind};
use claps::dynamics::{ControlInput, LieState};
use claps::error::Error;
use claps::estimate::{Frame, GaussianPrediction, InEkf, NoiseConfig, NoiseTiming, Predictor, PredictorConfig, SsEkf};
use claps::regions;
use claps::se2::{self, Pose, Twist};
use claps::simulate::TransitionRecord;
use nalgebra::{Matrix2, Matrix3, Vector3};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClapsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Singular = 4,
    Vacuous = 5,
    KindMismatch = 6,
    Empty = 7,
    Schema = 8,
    Io = 9,
    Panic = 10,
    Other = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClapsScoreKind {
    MahalanobisLie = 0,
    MahalanobisSs = 1,
    L2Ss = 2,
    L2Lie = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClapsPredictorKind {
    Inekf = 0,
    SsEkf = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClapsNoiseTiming {
    PerSubstep = 0,
    Held = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClapsFrame {
    ExpCoordsLeft = 0,
    Generalized = 1,
}

/// Pose `(x, y, theta)` and body twist `(vx, vy, wz)`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClapsState {
    pub pose: [f64; 3],
    pub twist: [f64; 3],
}

/// One observed transition under the wrench `u = (fx, tz)`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClapsRecord {
    pub s0: ClapsState,
    pub u: [f64; 2],
    pub s1: ClapsState,
}

/// Mean state and row-major 3x3 pose covariance.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClapsPrediction {
    pub mean: ClapsState,
    pub cov: [f64; 9],
    pub frame: ClapsFrame,
}

/// Opaque one-step predictor.
pub struct ClapsPredictor {
    inner: Box<dyn Predictor>,
}

/// Opaque calibration result.
pub struct ClapsCalibration {
    inner: CalibrationResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ClapsStatus {
    match e {
        Error::Domain(_) => ClapsStatus::Domain,
        Error::Singular(_) => ClapsStatus::Singular,
        Error::InvalidArgument(_) | Error::UnsupportedMethod { .. } | Error::Degenerate(_) => ClapsStatus::InvalidArgument,
        Error::Empty(_) => ClapsStatus::Empty,
        Error::Vacuous => ClapsStatus::Vacuous,
        Error::KindMismatch(_) => ClapsStatus::KindMismatch,
        Error::Schema(_) | Error::Missing(_) => ClapsStatus::Schema,
        Error::Io(_) => ClapsStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ClapsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ClapsStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            ClapsStatus::NullPointer
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("panic inside claps".into());
            ClapsStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

fn state_in(s: &ClapsState) -> LieState {
    LieState::new(Pose::new(s.pose[0], s.pose[1], s.pose[2]), Twist::new(s.twist[0], s.twist[1], s.twist[2]))
}

fn state_out(s: &LieState) -> ClapsState {
    ClapsState { pose: [s.pose.x, s.pose.y, s.pose.theta], twist: [s.twist.vx, s.twist.vy, s.twist.wz] }
}

fn kind_in(k: ClapsScoreKind) -> ScoreKind {
    match k {
        ClapsScoreKind::MahalanobisLie => ScoreKind::ClapsMahalanobisLie,
        ClapsScoreKind::MahalanobisSs => ScoreKind::MahalanobisSS,
        ClapsScoreKind::L2Ss => ScoreKind::L2SS,
        ClapsScoreKind::L2Lie => ScoreKind::L2Lie,
    }
}

fn prediction_in(p: &ClapsPrediction) -> GaussianPrediction {
    let s = state_in(&p.mean);
    GaussianPrediction {
        pose: s.pose,
        twist: s.twist,
        cov: Matrix3::from_row_slice(&p.cov),
        frame: match p.frame {
            ClapsFrame::ExpCoordsLeft => Frame::ExpCoordsLeft,
            ClapsFrame::Generalized => Frame::Generalized,
        },
    }
}

fn prediction_out(p: &GaussianPrediction) -> ClapsPrediction {
    let mut cov = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            cov[3 * r + c] = p.cov[(r, c)];
        }
    }
    ClapsPrediction {
        mean: state_out(&LieState::new(p.pose, p.twist)),
        cov,
        frame: match p.frame {
            Frame::ExpCoordsLeft => ClapsFrame::ExpCoordsLeft,
            Frame::Generalized => ClapsFrame::Generalized,
        },
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn claps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn claps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// `exp` of the algebra vector `v = (rho_x, rho_y, theta)`.
///
/// # Safety
/// `v` must point to 3 doubles and `pose_out` to room for 3.
#[no_mangle]
pub unsafe extern "C" fn claps_se2_exp(v: *const f64, pose_out: *mut f64) -> ClapsStatus {
    guard(|| {
        let v = std::slice::from_raw_parts(get(v, "v")?, 3);
        let o = std::slice::from_raw_parts_mut(out(pose_out, "pose_out")?, 3);
        let g = se2::exp(&Vector3::new(v[0], v[1], v[2]));
        o.copy_from_slice(&[g.x, g.y, g.theta]);
        Ok(())
    })
}

/// `log` of a pose; fails with `CLAPS_STATUS_DOMAIN` at `|theta| = pi`.
///
/// # Safety
/// `pose` must point to 3 doubles and `v_out` to room for 3.
#[no_mangle]
pub unsafe extern "C" fn claps_se2_log(pose: *const f64, v_out: *mut f64) -> ClapsStatus {
    guard(|| {
        let p = std::slice::from_raw_parts(get(pose, "pose")?, 3);
        let o = std::slice::from_raw_parts_mut(out(v_out, "v_out")?, 3);
        let v = se2::log(&Pose::new(p[0], p[1], p[2]))?;
        o.copy_from_slice(v.as_slice());
        Ok(())
    })
}

/// Predictor with the given model inertia (row-major 3x3), wrench noise
/// covariance (row-major 2x2), substep rate and horizon.
///
/// # Safety
/// `inertia` must point to 9 doubles, `q0` to 4, `out_handle` must be valid.
#[no_mangle]
pub unsafe extern "C" fn claps_predictor_new(
    kind: ClapsPredictorKind,
    inertia: *const f64,
    q0: *const f64,
    timing: ClapsNoiseTiming,
    substep_hz: f64,
    horizon: f64,
    out_handle: *mut *mut ClapsPredictor,
) -> ClapsStatus {
    guard(|| {
        let m = Matrix3::from_row_slice(std::slice::from_raw_parts(get(inertia, "inertia")?, 9));
        let q = Matrix2::from_row_slice(std::slice::from_raw_parts(get(q0, "q0")?, 4));
        let o = out(out_handle, "out_handle")?;
        let noise = NoiseConfig {
            q0: q,
            timing: match timing {
                ClapsNoiseTiming::PerSubstep => NoiseTiming::PerSubstep,
                ClapsNoiseTiming::Held => NoiseTiming::Held,
            },
        };
        noise.validate()?;
        claps::dynamics::LieModel::unicycle(m)?;
        let config = PredictorConfig { inertia: m, noise, substep_hz, horizon };
        let inner: Box<dyn Predictor> = match kind {
            ClapsPredictorKind::Inekf => Box::new(InEkf::new(config)),
            ClapsPredictorKind::SsEkf => Box::new(SsEkf::new(config)),
        };
        *o = Box::into_raw(Box::new(ClapsPredictor { inner }));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from `claps_predictor_new` (or be NULL) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn claps_predictor_free(handle: *mut ClapsPredictor) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// One-step Gaussian prediction from `s0` under the wrench `u = (fx, tz)`.
///
/// # Safety
/// All pointers must be valid; `u` points to 2 doubles.
#[no_mangle]
pub unsafe extern "C" fn claps_predict(handle: *const ClapsPredictor, s0: *const ClapsState, u: *const f64, pred_out: *mut ClapsPrediction) -> ClapsStatus {
    guard(|| {
        let p = get(handle, "handle")?;
        let s = state_in(get(s0, "s0")?);
        let u = std::slice::from_raw_parts(get(u, "u")?, 2);
        let o = out(pred_out, "pred_out")?;
        *o = prediction_out(&p.inner.predict(&s, &ControlInput::new(u[0], u[1]))?);
        Ok(())
    })
}

/// Split-conformal calibration of `predictor` on `n` records.
///
/// # Safety
/// `records` must point to `n` records; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn claps_calibrate(
    predictor: *const ClapsPredictor,
    records: *const ClapsRecord,
    n: usize,
    alpha: f64,
    kind: ClapsScoreKind,
    out_handle: *mut *mut ClapsCalibration,
) -> ClapsStatus {
    guard(|| {
        let p = get(predictor, "predictor")?;
        let recs = std::slice::from_raw_parts(get(records, "records")?, n);
        let o = out(out_handle, "out_handle")?;
        let data: Vec<TransitionRecord> = recs
            .iter()
            .map(|r| TransitionRecord { s0: state_in(&r.s0), u_des: ControlInput::new(r.u[0], r.u[1]), s1: state_in(&r.s1), seed: 0 })
            .collect();
        let inner = conformal::calibrate(p.inner.as_ref(), &data, alpha, kind_in(kind))?;
        *o = Box::into_raw(Box::new(ClapsCalibration { inner }));
        Ok(())
    })
}

/// Loads a calibration from its JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn claps_calibration_from_json(json: *const c_char, out_handle: *mut *mut ClapsCalibration) -> ClapsStatus {
    guard(|| {
        let text = CStr::from_ptr(get(json, "json")?).to_str().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let o = out(out_handle, "out_handle")?;
        *o = Box::into_raw(Box::new(ClapsCalibration { inner: CalibrationResult::from_json(text)? }));
        Ok(())
    })
}

/// JSON form of a calibration; release with `claps_string_free`.
///
/// # Safety
/// `handle` and `json_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn claps_calibration_to_json(handle: *const ClapsCalibration, json_out: *mut *mut c_char) -> ClapsStatus {
    guard(|| {
        let c = get(handle, "handle")?;
        let o = out(json_out, "json_out")?;
        *o = CString::new(c.inner.to_json()?).map_err(|e| Error::InvalidArgument(e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library (or be NULL).
#[no_mangle]
pub unsafe extern "C" fn claps_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `handle` must come from this library (or be NULL) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn claps_calibration_free(handle: *mut ClapsCalibration) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Calibrated radius; `INFINITY` when vacuous.
///
/// # Safety
/// `handle` must be valid or NULL (NULL returns NaN).
#[no_mangle]
pub unsafe extern "C" fn claps_calibration_q_hat(handle: *const ClapsCalibration) -> f64 {
    handle.as_ref().map_or(f64::NAN, |c| c.inner.q_hat)
}

/// Covariance scaling `q_hat^2 / chi2`.
///
/// # Safety
/// `handle` must be valid or NULL (NULL returns NaN).
#[no_mangle]
pub unsafe extern "C" fn claps_calibration_zeta(handle: *const ClapsCalibration) -> f64 {
    handle.as_ref().map_or(f64::NAN, |c| c.inner.zeta)
}

/// # Safety
/// `handle` must be valid or NULL (NULL returns false).
#[no_mangle]
pub unsafe extern "C" fn claps_calibration_is_vacuous(handle: *const ClapsCalibration) -> bool {
    handle.as_ref().is_some_and(|c| c.inner.vacuous)
}

/// Nonconformity score of `truth` (pose, 3 doubles) against a prediction.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn claps_score(kind: ClapsScoreKind, truth: *const f64, pred: *const ClapsPrediction, score_out: *mut f64) -> ClapsStatus {
    guard(|| {
        let t = std::slice::from_raw_parts(get(truth, "truth")?, 3);
        let p = prediction_in(get(pred, "pred")?);
        let o = out(score_out, "score_out")?;
        *o = conformal::score(kind_in(kind), &Pose::new(t[0], t[1], t[2]), &p)?;
        Ok(())
    })
}

/// Membership of `query` (pose, 3 doubles) in the calibrated region.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn claps_contains(cal: *const ClapsCalibration, pred: *const ClapsPrediction, query: *const f64, inside_out: *mut bool) -> ClapsStatus {
    guard(|| {
        let c = get(cal, "cal")?;
        let p = prediction_in(get(pred, "pred")?);
        let q = std::slice::from_raw_parts(get(query, "query")?, 3);
        let o = out(inside_out, "inside_out")?;
        *o = conformal::contains(&Pose::new(q[0], q[1], q[2]), &p, &c.inner)?;
        Ok(())
    })
}

/// Configuration-space volume of the region, from a closed mesh over
/// `n_samples` boundary points.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn claps_region_volume(cal: *const ClapsCalibration, pred: *const ClapsPrediction, n_samples: usize, volume_out: *mut f64) -> ClapsStatus {
    guard(|| {
        let c = get(cal, "cal")?;
        let p = prediction_in(get(pred, "pred")?);
        let o = out(volume_out, "volume_out")?;
        *o = regions::reconstruct_mesh(&p, &c.inner, n_samples, None)?.volume;
        Ok(())
    })
}
