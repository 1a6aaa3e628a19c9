//! Planar rigid motions, SE(2).
//!
//! Tangent vectors are ordered translation-first, `(rho_x, rho_y, theta)`,
//! which is also the ordering of body twists `(vx, vy, wz)` and of every
//! covariance in the crate.
//!
//! A [`Pose`] is stored as `(x, y, theta)` with `theta` wrapped to `[-pi, pi)`;
//! matrix forms are built on demand.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponential coordinates `(rho_x, rho_y, theta)` of an element of se(2).
pub type AlgebraVector = Vector3<f64>;

/// Below this heading magnitude `exp`/`log` switch to Taylor expansions.
pub const SERIES_THRESHOLD: f64 = 1e-6;

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut t = theta - two_pi * ((theta + PI) / two_pi).floor();
    // floor can land exactly on the upper edge through rounding
    if t >= PI {
        t -= two_pi;
    }
    if t < -PI {
        t = -PI;
    }
    t
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle_upper(theta: f64) -> f64 {
    let t = wrap_angle(theta);
    if t == -PI {
        PI
    } else {
        t
    }
}

fn rot(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn identity() -> Self {
        Self { x: 0.0, y: 0.0, theta: 0.0 }
    }

    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        rot(self.theta)
    }

    /// Homogeneous 3x3 matrix `[[R, t], [0, 1]]`.
    pub fn to_matrix(&self) -> Matrix3<f64> {
        let r = self.rotation();
        Matrix3::new(r[(0, 0)], r[(0, 1)], self.x, r[(1, 0)], r[(1, 1)], self.y, 0.0, 0.0, 1.0)
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Self::new(m[(0, 2)], m[(1, 2)], m[(1, 0)].atan2(m[(0, 0)]))
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        let t = self.translation() + self.rotation() * other.translation();
        Pose::new(t.x, t.y, self.theta + other.theta)
    }

    pub fn inverse(&self) -> Pose {
        let t = -(self.rotation().transpose() * self.translation());
        Pose::new(t.x, t.y, -self.theta)
    }

    /// Maps a point expressed in this pose's frame to the parent frame.
    pub fn act(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.translation() + self.rotation() * p
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// Body-frame velocity: forward, lateral and yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub vx: f64,
    pub vy: f64,
    pub wz: f64,
}

impl Twist {
    pub fn new(vx: f64, vy: f64, wz: f64) -> Self {
        Self { vx, vy, wz }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.vx, self.vy, self.wz)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self { vx: v.x, vy: v.y, wz: v.z }
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.wz.is_finite()
    }
}

/// Generalized coordinates `(x, y, theta)` with `theta` in `[-pi, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeneralizedConfig {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl GeneralizedConfig {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.theta)
    }
}

/// True when `v` lies in the open neighbourhood where `exp` is a diffeomorphism.
pub fn in_diffeomorphic_domain(v: &AlgebraVector) -> bool {
    v.z.abs() < PI
}

pub fn wedge(v: &AlgebraVector) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.x, v.z, 0.0, v.y, 0.0, 0.0, 0.0)
}

pub fn vee(m: &Matrix3<f64>) -> AlgebraVector {
    Vector3::new(m[(0, 2)], m[(1, 2)], m[(1, 0)])
}

/// Coefficients `(sin(t)/t, (1 - cos(t))/t)` of the SE(2) left Jacobian on translations.
fn v_coefficients(theta: f64) -> (f64, f64) {
    if theta.abs() < SERIES_THRESHOLD {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, theta / 2.0 - theta * t2 / 24.0)
    } else {
        let half = 0.5 * theta;
        let s = half.sin();
        (theta.sin() / theta, 2.0 * s * s / theta)
    }
}

/// `(theta/2) cot(theta/2)`, the diagonal of the inverse left Jacobian block.
fn inv_v_diagonal(theta: f64) -> f64 {
    if theta.abs() < SERIES_THRESHOLD {
        1.0 - theta * theta / 12.0
    } else {
        let half = 0.5 * theta;
        half * half.cos() / half.sin()
    }
}

pub fn exp(v: &AlgebraVector) -> Pose {
    let theta = v.z;
    let (a, b) = v_coefficients(theta);
    let x = a * v.x - b * v.y;
    let y = b * v.x + a * v.y;
    Pose::new(x, y, theta)
}

/// Inverse of [`exp`] on `|theta| < pi`.
pub fn log(g: &Pose) -> Result<AlgebraVector> {
    let theta = wrap_angle(g.theta);
    if theta.abs() >= PI || !g.is_finite() {
        return Err(Error::Domain(theta));
    }
    let a = inv_v_diagonal(theta);
    let h = 0.5 * theta;
    Ok(Vector3::new(a * g.x + h * g.y, -h * g.x + a * g.y, theta))
}

/// Adjoint of the algebra on itself, `ad(xi) eta = [xi^, eta^]^v`.
pub fn ad(xi: &Twist) -> Matrix3<f64> {
    Matrix3::new(0.0, -xi.wz, xi.vy, xi.wz, 0.0, -xi.vx, 0.0, 0.0, 0.0)
}

pub fn ad_vec(xi: &Vector3<f64>) -> Matrix3<f64> {
    ad(&Twist::from_vector(xi))
}

/// The kinematics map `K(q)`.
pub fn kinematics_map(q: &GeneralizedConfig) -> Pose {
    Pose::new(q.x, q.y, q.theta)
}

pub fn kinematics_inv(g: &Pose) -> GeneralizedConfig {
    GeneralizedConfig::new(g.x, g.y, g.theta)
}

/// Left-invariant displacement `log(pred^-1 * truth)`.
pub fn group_error(pred: &Pose, truth: &Pose) -> Result<AlgebraVector> {
    log(&pred.inverse().compose(truth))
}
