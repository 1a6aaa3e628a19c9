use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::{eps_accel, ss_accel, ControlInput, LieModel, LieState, SsModel};
use crate::error::{Error, Result};
use crate::se2::{self, Pose, Twist};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    ForwardEuler,
    SymplecticEuler,
    Heun,
    Rk2,
    Rk4,
    Cf4,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::ForwardEuler, Method::SymplecticEuler, Method::Heun, Method::Rk2, Method::Rk4, Method::Cf4];

    pub fn name(&self) -> &'static str {
        match self {
            Method::ForwardEuler => "FE",
            Method::SymplecticEuler => "SE",
            Method::Heun => "Heun",
            Method::Rk2 => "RK2",
            Method::Rk4 => "RK4",
            Method::Cf4 => "CF4",
        }
    }

    pub fn order(&self) -> u32 {
        match self {
            Method::ForwardEuler | Method::SymplecticEuler => 1,
            Method::Heun | Method::Rk2 => 2,
            Method::Rk4 | Method::Cf4 => 4,
        }
    }

    pub fn supports(&self, space: Space) -> bool {
        !matches!((self, space), (Method::Rk4, Space::Lie) | (Method::Cf4, Space::StateSpace))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown integrator {s}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Space {
    Lie,
    StateSpace,
}

impl Space {
    pub fn name(&self) -> &'static str {
        match self {
            Space::Lie => "Lie",
            Space::StateSpace => "SS",
        }
    }
}

/// Generalized coordinates and velocities. The heading is not wrapped while
/// integrating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsState {
    pub q: Vector3<f64>,
    pub dq: Vector3<f64>,
}

impl SsState {
    pub fn from_lie(s: &LieState) -> Self {
        let q = Vector3::new(s.pose.x, s.pose.y, s.pose.theta);
        let (sn, c) = s.pose.theta.sin_cos();
        let v = s.twist;
        let dq = Vector3::new(c * v.vx - sn * v.vy, sn * v.vx + c * v.vy, v.wz);
        Self { q, dq }
    }

    pub fn to_lie(&self) -> LieState {
        let (s, c) = self.q.z.sin_cos();
        let twist = Twist::new(c * self.dq.x + s * self.dq.y, -s * self.dq.x + c * self.dq.y, self.dq.z);
        LieState::new(Pose::new(self.q.x, self.q.y, self.q.z), twist)
    }

    fn pack(&self) -> Vector6<f64> {
        Vector6::new(self.q.x, self.q.y, self.q.z, self.dq.x, self.dq.y, self.dq.z)
    }

    fn unpack(v: &Vector6<f64>) -> Self {
        Self { q: v.fixed_rows::<3>(0).into(), dq: v.fixed_rows::<3>(3).into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum State {
    Lie(LieState),
    StateSpace(SsState),
}

impl State {
    pub fn space(&self) -> Space {
        match self {
            State::Lie(_) => Space::Lie,
            State::StateSpace(_) => Space::StateSpace,
        }
    }

    pub fn to_lie(&self) -> LieState {
        match self {
            State::Lie(s) => *s,
            State::StateSpace(s) => s.to_lie(),
        }
    }
}

/// Gauss-Legendre nodes on [0, 1] and the commutator-free weights.
const CF4_C1: f64 = 0.5 - 0.288_675_134_594_812_9;
const CF4_C2: f64 = 0.5 + 0.288_675_134_594_812_9;
const CF4_A1: f64 = 0.25 + 0.288_675_134_594_812_9;
const CF4_A2: f64 = 0.25 - 0.288_675_134_594_812_9;

/// Third-order continuous extension of classical RK4 at fraction `t` of the step.
fn rk4_dense(x0: &Vector3<f64>, k: &[Vector3<f64>; 4], h: f64, t: f64) -> Vector3<f64> {
    let t2 = t * t;
    let t3 = t2 * t;
    let b1 = t - 1.5 * t2 + 2.0 * t3 / 3.0;
    let b23 = t2 - 2.0 * t3 / 3.0;
    let b4 = -0.5 * t2 + 2.0 * t3 / 3.0;
    x0 + (k[0] * b1 + (k[1] + k[2]) * b23 + k[3] * b4) * h
}

/// Pose increment (applied on the right) and twist increment of one step.
fn lie_increment(s: &LieState, u: &ControlInput, dt: f64, method: Method, model: &LieModel) -> Result<(Pose, Vector3<f64>)> {
    let f = |xi: &Vector3<f64>| eps_accel(&Twist::from_vector(xi), u, model);
    let xi = s.twist.as_vector();
    let flow = |v: &Vector3<f64>| se2::exp(&(v * dt));
    Ok(match method {
        Method::ForwardEuler => (flow(&xi), f(&xi) * dt),
        Method::SymplecticEuler => {
            let d = f(&xi) * dt;
            (flow(&(xi + d)), d)
        }
        Method::Heun => {
            let k1 = f(&xi);
            let pred = xi + k1 * dt;
            let k2 = f(&pred);
            (flow(&((xi + pred) * 0.5)), (k1 + k2) * (0.5 * dt))
        }
        Method::Rk2 => {
            let mid = xi + f(&xi) * (0.5 * dt);
            (flow(&mid), f(&mid) * dt)
        }
        Method::Cf4 => {
            let k1 = f(&xi);
            let k2 = f(&(xi + k1 * (0.5 * dt)));
            let k3 = f(&(xi + k2 * (0.5 * dt)));
            let k4 = f(&(xi + k3 * dt));
            let k = [k1, k2, k3, k4];
            let xa = rk4_dense(&xi, &k, dt, CF4_C1);
            let xb = rk4_dense(&xi, &k, dt, CF4_C2);
            let first = flow(&(xa * CF4_A1 + xb * CF4_A2));
            let second = flow(&(xa * CF4_A2 + xb * CF4_A1));
            (first.compose(&second), (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0))
        }
        Method::Rk4 => return Err(Error::UnsupportedMethod { method: "RK4", space: "Lie" }),
    })
}

fn lie_step(s: &LieState, u: &ControlInput, dt: f64, method: Method, model: &LieModel) -> Result<LieState> {
    let (inc, dxi) = lie_increment(s, u, dt, method, model)?;
    Ok(LieState::new(s.pose.compose(&inc), Twist::from_vector(&(s.twist.as_vector() + dxi))))
}

/// Increment of the packed `(q, dq)` vector over one step.
fn ss_increment(s: &SsState, u: &ControlInput, dt: f64, method: Method, model: &SsModel) -> Result<Vector6<f64>> {
    let f = |x: &Vector6<f64>| {
        let q: Vector3<f64> = x.fixed_rows::<3>(0).into();
        let dq: Vector3<f64> = x.fixed_rows::<3>(3).into();
        let a = ss_accel(&q, &dq, u, model);
        Vector6::new(dq.x, dq.y, dq.z, a.x, a.y, a.z)
    };
    let x = s.pack();
    Ok(match method {
        Method::ForwardEuler => f(&x) * dt,
        Method::SymplecticEuler => {
            let ddq = ss_accel(&s.q, &s.dq, u, model) * dt;
            let dq = (s.dq + ddq) * dt;
            Vector6::new(dq.x, dq.y, dq.z, ddq.x, ddq.y, ddq.z)
        }
        Method::Heun => {
            let k1 = f(&x);
            let k2 = f(&(x + k1 * dt));
            (k1 + k2) * (0.5 * dt)
        }
        Method::Rk2 => {
            let k1 = f(&x);
            f(&(x + k1 * (0.5 * dt))) * dt
        }
        Method::Rk4 => {
            let k1 = f(&x);
            let k2 = f(&(x + k1 * (0.5 * dt)));
            let k3 = f(&(x + k2 * (0.5 * dt)));
            let k4 = f(&(x + k3 * dt));
            (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0)
        }
        Method::Cf4 => return Err(Error::UnsupportedMethod { method: "CF4", space: "SS" }),
    })
}

fn ss_step(s: &SsState, u: &ControlInput, dt: f64, method: Method, model: &SsModel) -> Result<SsState> {
    Ok(SsState::unpack(&(s.pack() + ss_increment(s, u, dt, method, model)?)))
}

/// Kahan-compensated running sum.
#[derive(Debug, Clone, Copy)]
struct Compensated<const N: usize> {
    sum: nalgebra::SVector<f64, N>,
    comp: nalgebra::SVector<f64, N>,
}

impl<const N: usize> Compensated<N> {
    fn new(start: nalgebra::SVector<f64, N>) -> Self {
        Self { sum: start, comp: nalgebra::SVector::zeros() }
    }

    fn add(&mut self, x: &nalgebra::SVector<f64, N>) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
}

/// One integration step of length `dt`; the representation follows the state.
pub fn step(
    state: &State,
    u: &ControlInput,
    dt: f64,
    method: Method,
    lie: &LieModel,
    ss: &SsModel,
) -> Result<State> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {dt}")));
    }
    match state {
        State::Lie(s) => lie_step(s, u, dt, method, lie).map(State::Lie),
        State::StateSpace(s) => ss_step(s, u, dt, method, ss).map(State::StateSpace),
    }
}

/// Integrates `n_steps` steps of length `dt` under a constant input.
pub fn rollout(
    state: &State,
    u: &ControlInput,
    dt: f64,
    n_steps: usize,
    method: Method,
    lie: &LieModel,
    ss: &SsModel,
) -> Result<State> {
    if !method.supports(state.space()) {
        return Err(Error::UnsupportedMethod { method: method.name(), space: state.space().name() });
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {dt}")));
    }
    // Long rollouts at small steps would otherwise hit a roundoff floor well
    // above the truncation error of the fourth-order schemes.
    match state {
        State::Lie(s0) => {
            let mut pose = Compensated::new(Vector3::new(s0.pose.x, s0.pose.y, s0.pose.theta));
            let mut twist = Compensated::new(s0.twist.as_vector());
            for _ in 0..n_steps {
                let cur = LieState { pose: Pose { x: pose.sum.x, y: pose.sum.y, theta: pose.sum.z }, twist: Twist::from_vector(&twist.sum) };
                let (inc, dxi) = lie_increment(&cur, u, dt, method, lie)?;
                let (s, c) = pose.sum.z.sin_cos();
                pose.add(&Vector3::new(c * inc.x - s * inc.y, s * inc.x + c * inc.y, inc.theta));
                twist.add(&dxi);
            }
            let p = pose.sum;
            Ok(State::Lie(LieState::new(Pose::new(p.x, p.y, p.z), Twist::from_vector(&twist.sum))))
        }
        State::StateSpace(s0) => {
            let mut x = Compensated::new(s0.pack());
            for _ in 0..n_steps {
                let inc = ss_increment(&SsState::unpack(&x.sum), u, dt, method, ss)?;
                x.add(&inc);
            }
            Ok(State::StateSpace(SsState::unpack(&x.sum)))
        }
    }
}
