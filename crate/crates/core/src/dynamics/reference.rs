//! High-accuracy terminal state for a constant input, used as the accuracy
//! oracle for the integrator family.
//!
//! When the twist rate is constant along admissible twists (diagonal inertia,
//! no damping) the twist is affine in time and the heading a quadratic, so the
//! terminal pose is `p0 + int R(theta(t)) v(t) dt`, evaluated with composite
//! Gauss-Legendre quadrature. Other models fall back to CF4 at a fine step.

use nalgebra::{Vector2, Vector3};

use super::integrate::{rollout, Method, State};
use super::{eps_accel, ControlInput, LieModel, LieState, SsModel};
use crate::error::{Error, Result};
use crate::se2::{Pose, Twist};

/// Default number of quadrature panels.
pub const REFERENCE_PANELS: usize = 64;

/// Step used when the reference has to integrate.
const FALLBACK_DT: f64 = 1e-5;

const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_69),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_34),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_05),
    (-0.183_434_642_495_649_78, 0.362_683_783_378_361_77),
    (0.183_434_642_495_649_78, 0.362_683_783_378_361_77),
    (0.525_532_409_916_329, 0.313_706_645_877_887_05),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_34),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_69),
];

/// Terminal state after holding `u` for `duration` seconds.
pub fn reference_trajectory(
    s0: &LieState,
    u: &ControlInput,
    duration: f64,
    model: &LieModel,
    panels: usize,
) -> Result<LieState> {
    if !(duration >= 0.0) || panels == 0 {
        return Err(Error::InvalidArgument("duration must be non-negative and panels positive".into()));
    }
    if model.twist_rate_is_constant() {
        Ok(quadrature(s0, u, duration, model, panels))
    } else {
        let n = (duration / FALLBACK_DT).ceil().max(1.0) as usize;
        let dt = duration / n as f64;
        let ss = SsModel::new(*model.inertia())?;
        Ok(rollout(&State::Lie(*s0), u, dt, n, Method::Cf4, model, &ss)?.to_lie())
    }
}

fn quadrature(s0: &LieState, u: &ControlInput, duration: f64, model: &LieModel, panels: usize) -> LieState {
    let xi0 = s0.twist.as_vector();
    let rate = eps_accel(&s0.twist, u, model);
    let heading = |t: f64| s0.pose.theta + xi0.z * t + 0.5 * rate.z * t * t;
    let integrand = |t: f64| {
        let v = xi0 + rate * t;
        let (s, c) = heading(t).sin_cos();
        Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
    };
    let h = duration / panels as f64;
    let mut sum = Vector2::zeros();
    let mut comp = Vector2::zeros();
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        let mut panel = Vector2::zeros();
        for (x, w) in GL8.iter() {
            panel += integrand(mid + 0.5 * h * x) * *w;
        }
        // Kahan summation across panels
        let y = panel * (0.5 * h) - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    let twist: Vector3<f64> = xi0 + rate * duration;
    let pose = Pose::new(s0.pose.x + sum.x, s0.pose.y + sum.y, heading(duration));
    LieState::new(pose, Twist::from_vector(&twist))
}
