//! Second-order unicycle dynamics in generalized coordinates and in
//! Euler-Poincaré-Suslov (body twist) form.
//!
//! The state-space form integrates `(q, dq)` with the no-slip constraint
//! `A(q) dq = 0` enforced by an explicit Lagrange multiplier. The Lie form
//! integrates `(g, xi)` with the reconstruction equation `dg = g xi^` and
//! twist rates projected onto the constraint manifold by a precomputed
//! oblique projector.

mod integrate;
mod reference;

pub use integrate::{rollout, step, Method, Space, State, SsState};
pub use reference::{reference_trajectory, REFERENCE_PANELS};

use nalgebra::{DMatrix, Matrix3, Matrix3x2, MatrixXx3, RowVector3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se2::{self, GeneralizedConfig, Pose, Twist};

/// Body-frame wrench: forward force (N) and yaw torque (N m).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub fx: f64,
    pub tz: f64,
}

impl ControlInput {
    pub fn new(fx: f64, tz: f64) -> Self {
        Self { fx, tz }
    }

    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.fx, self.tz)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Self { fx: v.x, tz: v.y }
    }

    /// Wrench that produces the given body accelerations under a diagonal inertia.
    pub fn from_accelerations(inertia: &Matrix3<f64>, ddx: f64, ddtheta: f64) -> Self {
        Self { fx: inertia[(0, 0)] * ddx, tz: inertia[(2, 2)] * ddtheta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LieState {
    pub pose: Pose,
    pub twist: Twist,
}

impl LieState {
    pub fn new(pose: Pose, twist: Twist) -> Self {
        Self { pose, twist }
    }

    /// State at the origin moving with the given body twist.
    pub fn at_origin(twist: Twist) -> Self {
        Self { pose: Pose::identity(), twist }
    }
}

/// Unicycle no-slip constraint in generalized coordinates, `[sin t, -cos t, 0]`.
pub fn unicycle_constraint(theta: f64) -> RowVector3<f64> {
    let (s, c) = theta.sin_cos();
    RowVector3::new(s, -c, 0.0)
}

/// Time derivative of [`unicycle_constraint`] along a heading rate.
pub fn unicycle_constraint_rate(theta: f64, dtheta: f64) -> RowVector3<f64> {
    let (s, c) = theta.sin_cos();
    RowVector3::new(dtheta * c, dtheta * s, 0.0)
}

/// Generalized force map for body wrenches, `[[c, 0], [s, 0], [0, 1]]`.
pub fn unicycle_input_map(theta: f64) -> Matrix3x2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3x2::new(c, 0.0, s, 0.0, 0.0, 1.0)
}

/// Generalized-coordinate model: constant inertia `M`, with the unicycle's
/// configuration-dependent constraint and force map.
#[derive(Debug, Clone, PartialEq)]
pub struct SsModel {
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
}

impl SsModel {
    pub fn new(inertia: Matrix3<f64>) -> Result<Self> {
        let inertia_inv = spd_inverse(&inertia)?;
        Ok(Self { inertia, inertia_inv })
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }

    pub fn constraint(&self, q: &Vector3<f64>) -> RowVector3<f64> {
        unicycle_constraint(q.z)
    }

    pub fn input_map(&self, q: &Vector3<f64>) -> Matrix3x2<f64> {
        unicycle_input_map(q.z)
    }
}

fn spd_inverse(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    if (m - m.transpose()).abs().max() > 1e-12 * m.abs().max() {
        return Err(Error::InvalidArgument("inertia must be symmetric".into()));
    }
    let chol = m.cholesky().ok_or(Error::Singular("inertia is not positive definite"))?;
    Ok(chol.inverse())
}

/// Body-frame model for the Euler-Poincaré-Suslov equations.
#[derive(Debug, Clone, PartialEq)]
pub struct LieModel {
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
    constraint: MatrixXx3<f64>,
    input_map: Matrix3x2<f64>,
    damping: Vector3<f64>,
    projector: Matrix3<f64>,
    complement: Matrix3<f64>,
}

impl LieModel {
    pub fn new(inertia: Matrix3<f64>, constraint: MatrixXx3<f64>, input_map: Matrix3x2<f64>) -> Result<Self> {
        let inertia_inv = spd_inverse(&inertia)?;
        let (projector, complement) = projection_matrix(&inertia, &constraint)?;
        Ok(Self {
            inertia,
            inertia_inv,
            constraint,
            input_map,
            damping: Vector3::zeros(),
            projector,
            complement,
        })
    }

    /// Second-order unicycle: `A = [0, 1, 0]`, `B = [[1, 0], [0, 0], [0, 1]]`.
    pub fn unicycle(inertia: Matrix3<f64>) -> Result<Self> {
        let constraint = MatrixXx3::from_row_slice(&[0.0, 1.0, 0.0]);
        let input_map = Matrix3x2::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        Self::new(inertia, constraint, input_map)
    }

    /// Lie form of a generalized-coordinate unicycle model evaluated at `q`.
    pub fn from_ss(ss: &SsModel, q: &GeneralizedConfig) -> Result<Self> {
        let qv = q.as_vector();
        let constraint = convert_constraint(&MatrixXx3::from_rows(&[ss.constraint(&qv)]), q)?;
        let inertia = convert_inertia(ss.inertia(), q)?;
        let input_map = convert_input(&ss.input_map(&qv), q)?;
        Self::new(symmetrize(&inertia), constraint, input_map)
    }

    /// Adds viscous body-frame friction `-diag(d) xi` to the generalized forces.
    pub fn with_damping(mut self, damping: Vector3<f64>) -> Self {
        self.damping = damping;
        self
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }

    pub fn inertia_inv(&self) -> &Matrix3<f64> {
        &self.inertia_inv
    }

    pub fn constraint(&self) -> &MatrixXx3<f64> {
        &self.constraint
    }

    pub fn input_map(&self) -> &Matrix3x2<f64> {
        &self.input_map
    }

    pub fn damping(&self) -> &Vector3<f64> {
        &self.damping
    }

    pub fn projector(&self) -> &Matrix3<f64> {
        &self.projector
    }

    /// `I - P`, applied to unconstrained twist rates.
    pub fn complement(&self) -> &Matrix3<f64> {
        &self.complement
    }

    /// Largest constraint residual `|A xi|`.
    pub fn constraint_residual(&self, xi: &Twist) -> f64 {
        (&self.constraint * xi.as_vector()).abs().max()
    }

    /// Twist-rate map `d xi / d u` (3x2), constant for a fixed model.
    pub fn input_gain(&self) -> Matrix3x2<f64> {
        self.complement * self.inertia_inv * self.input_map
    }

    /// True when the twist rate does not depend on the twist for admissible
    /// twists, i.e. the Coriolis term is fully projected out and there is no
    /// damping. The reconstruction then reduces to a quadrature.
    pub fn twist_rate_is_constant(&self) -> bool {
        if self.damping.iter().any(|d| *d != 0.0) {
            return false;
        }
        let basis = admissible_basis(&self.constraint);
        let scale = self.inertia.abs().max();
        let quad = |v: &Vector3<f64>| self.complement * self.inertia_inv * (se2::ad_vec(v).transpose() * self.inertia * v);
        let tol = 1e-14 * scale.max(1.0);
        for (i, a) in basis.iter().enumerate() {
            if quad(a).abs().max() > tol {
                return false;
            }
            for b in basis.iter().skip(i + 1) {
                if quad(&(a + b)).abs().max() > tol {
                    return false;
                }
            }
        }
        true
    }
}

/// Orthonormal basis of the null space of `a`.
fn admissible_basis(a: &MatrixXx3<f64>) -> Vec<Vector3<f64>> {
    let m = DMatrix::from_fn(a.nrows().max(3), 3, |i, j| if i < a.nrows() { a[(i, j)] } else { 0.0 });
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let rank = svd.singular_values.iter().filter(|s| **s > 1e-12).count();
    (rank..3).map(|r| Vector3::new(vt[(r, 0)], vt[(r, 1)], vt[(r, 2)])).collect()
}

fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

/// Body Jacobian of the kinematics map, columns `(g^-1 dK/dq_j)^v`.
pub fn body_jacobian(q: &GeneralizedConfig) -> Matrix3<f64> {
    let g_inv = se2::kinematics_map(q).inverse().to_matrix();
    let (s, c) = q.theta.sin_cos();
    let dk_dx = Matrix3::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let dk_dy = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0);
    let dk_dth = Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0);
    let mut j = Matrix3::zeros();
    for (col, dk) in [dk_dx, dk_dy, dk_dth].iter().enumerate() {
        j.set_column(col, &se2::vee(&(g_inv * dk)));
    }
    j
}

/// Moore-Penrose pseudoinverse of the body Jacobian; errors when rank deficient.
pub fn body_jacobian_pinv(q: &GeneralizedConfig) -> Result<Matrix3<f64>> {
    pseudo_inverse_full_rank(&body_jacobian(q))
}

fn pseudo_inverse_full_rank(j: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let svd = j.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.iter().any(|s| *s <= 1e-12 * smax.max(1.0)) {
        return Err(Error::Singular("body Jacobian is rank deficient"));
    }
    svd.pseudo_inverse(0.0).map_err(|_| Error::Singular("body Jacobian pseudoinverse"))
}

/// `A J^+`.
pub fn convert_constraint(a: &MatrixXx3<f64>, q: &GeneralizedConfig) -> Result<MatrixXx3<f64>> {
    let jp = body_jacobian_pinv(q)?;
    Ok(a * jp)
}

/// `J^+^T M J^+`, so that kinetic energy is representation independent.
pub fn convert_inertia(m: &Matrix3<f64>, q: &GeneralizedConfig) -> Result<Matrix3<f64>> {
    let jp = body_jacobian_pinv(q)?;
    Ok(jp.transpose() * m * jp)
}

/// `J^+^T B`, so that mechanical power is representation independent.
pub fn convert_input(b: &Matrix3x2<f64>, q: &GeneralizedConfig) -> Result<Matrix3x2<f64>> {
    let jp = body_jacobian_pinv(q)?;
    Ok(jp.transpose() * b)
}

/// Oblique projector `P = M^-1 A^T (A M^-1 A^T)^-1 A` and its complement `I - P`.
pub fn projection_matrix(inertia: &Matrix3<f64>, constraint: &MatrixXx3<f64>) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
    let m_inv = spd_inverse(inertia)?;
    let k = constraint.nrows();
    if k == 0 {
        return Ok((Matrix3::zeros(), Matrix3::identity()));
    }
    let a = DMatrix::from_fn(k, 3, |i, j| constraint[(i, j)]);
    let m_inv_d = DMatrix::from_fn(3, 3, |i, j| m_inv[(i, j)]);
    let gram = &a * &m_inv_d * a.transpose();
    let gram_inv = gram
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::Singular("A M^-1 A^T is singular"))?;
    let p = &m_inv_d * a.transpose() * gram_inv * &a;
    let p = Matrix3::from_fn(|i, j| p[(i, j)]);
    Ok((p, Matrix3::identity() - p))
}

/// Unconstrained twist rate `M^-1 (ad(xi)^T M xi + B u - D xi)`.
pub fn free_accel(xi: &Twist, u: &ControlInput, model: &LieModel) -> Vector3<f64> {
    let v = xi.as_vector();
    let forces = se2::ad(xi).transpose() * (model.inertia * v) + model.input_map * u.as_vector()
        - model.damping.component_mul(&v);
    model.inertia_inv * forces
}

/// Constrained twist rate `(I - P) M^-1 (ad(xi)^T M xi + B u)`.
pub fn eps_accel(xi: &Twist, u: &ControlInput, model: &LieModel) -> Vector3<f64> {
    model.complement * free_accel(xi, u, model)
}

/// Constrained twist rate with the multiplier solved explicitly:
/// `lambda = -(A M^-1 A^T)^-1 A M^-1 F`, `dxi = M^-1 (F + A^T lambda)`.
pub fn eps_accel_lagrange(xi: &Twist, u: &ControlInput, model: &LieModel) -> Vector3<f64> {
    let v = xi.as_vector();
    let forces = se2::ad(xi).transpose() * (model.inertia * v) + model.input_map * u.as_vector()
        - model.damping.component_mul(&v);
    let k = model.constraint.nrows();
    if k == 0 {
        return model.inertia_inv * forces;
    }
    let a = DMatrix::from_fn(k, 3, |i, j| model.constraint[(i, j)]);
    let m_inv = DMatrix::from_fn(3, 3, |i, j| model.inertia_inv[(i, j)]);
    let f = DMatrix::from_fn(3, 1, |i, _| forces[i]);
    let gram = &a * &m_inv * a.transpose();
    let rhs = -(&a * &m_inv * &f);
    let lambda = gram.lu().solve(&rhs).expect("A M^-1 A^T invertible");
    let total = f + a.transpose() * lambda;
    let acc = m_inv * total;
    Vector3::new(acc[0], acc[1], acc[2])
}

/// Generalized accelerations from the forced Lagrange-d'Alembert equations.
pub fn ss_accel(q: &Vector3<f64>, dq: &Vector3<f64>, u: &ControlInput, model: &SsModel) -> Vector3<f64> {
    let a = model.constraint(q);
    let a_dot = unicycle_constraint_rate(q.z, dq.z);
    let bu = model.input_map(q) * u.as_vector();
    let m_inv = &model.inertia_inv;
    let gram = (a * m_inv * a.transpose())[(0, 0)];
    let lambda = -((a * m_inv * bu)[(0, 0)] + (a_dot * dq)[(0, 0)]) / gram;
    m_inv * (bu + a.transpose() * lambda)
}

/// Kinetic energy `xi^T M xi / 2`.
pub fn kinetic_energy(xi: &Twist, model: &LieModel) -> f64 {
    let v = xi.as_vector();
    0.5 * v.dot(&(model.inertia * v))
}
