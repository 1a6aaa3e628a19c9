//! Integrator accuracy and cost study: terminal-pose RMSE of each
//! (method, representation) pair against the quadrature reference.

use std::time::Instant;

use serde::Serialize;

use crate::dynamics::{reference_trajectory, rollout, ControlInput, LieModel, LieState, Method, Space, SsModel, SsState, State, REFERENCE_PANELS};
use crate::error::Result;
use crate::grid::GridSpec;
use crate::se2::{self, Twist};

/// Integrator step sizes for the convergence study.
pub const ORDER_STEPS: [f64; 5] = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1];

#[derive(Debug, Clone, Copy)]
pub struct BenchCase {
    pub s0: LieState,
    pub u: ControlInput,
}

/// Cases at the origin for every grid point; accelerations are turned into
/// wrenches with the model inertia.
pub fn grid_cases(grid: &GridSpec, lie: &LieModel) -> Vec<BenchCase> {
    grid.cases()
        .into_iter()
        .map(|c| BenchCase {
            s0: LieState::at_origin(Twist::new(c.vx0, 0.0, c.wz0)),
            u: ControlInput::from_accelerations(lie.inertia(), c.ddx, c.ddtheta),
        })
        .collect()
}

pub fn all_pairs() -> Vec<(Method, Space)> {
    let mut out = Vec::new();
    for space in [Space::StateSpace, Space::Lie] {
        for m in Method::ALL {
            if m.supports(space) {
                out.push((m, space));
            }
        }
    }
    out
}

/// Root-mean-square norm of the terminal group error over all cases.
/// The horizon is rounded to a whole number of steps.
pub fn terminal_rmse(
    cases: &[BenchCase],
    method: Method,
    space: Space,
    dt: f64,
    duration: f64,
    lie: &LieModel,
    ss: &SsModel,
) -> Result<f64> {
    let n = (duration / dt).round().max(1.0) as usize;
    let horizon = n as f64 * dt;
    let mut acc = 0.0;
    for c in cases {
        let truth = reference_trajectory(&c.s0, &c.u, horizon, lie, REFERENCE_PANELS)?;
        let start = match space {
            Space::Lie => State::Lie(c.s0),
            Space::StateSpace => State::StateSpace(SsState::from_lie(&c.s0)),
        };
        let end = rollout(&start, &c.u, dt, n, method, lie, ss)?.to_lie();
        let e = se2::group_error(&truth.pose, &end.pose)?;
        acc += e.norm_squared();
    }
    Ok((acc / cases.len() as f64).sqrt())
}

/// Least-squares slope of `log(err)` against `log(dt)`.
pub fn loglog_slope(dts: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub integrator: String,
    pub space: String,
    pub dt: f64,
    pub rmse: f64,
    pub ns_per_step: f64,
}

/// Wall-clock nanoseconds per step, averaged over `calls` steps.
pub fn time_per_step(case: &BenchCase, method: Method, space: Space, dt: f64, calls: usize, lie: &LieModel, ss: &SsModel) -> Result<f64> {
    let start = match space {
        Space::Lie => State::Lie(case.s0),
        Space::StateSpace => State::StateSpace(SsState::from_lie(&case.s0)),
    };
    let t0 = Instant::now();
    let end = rollout(&start, &case.u, dt, calls, method, lie, ss)?;
    let elapsed = t0.elapsed();
    std::hint::black_box(end);
    Ok(elapsed.as_nanos() as f64 / calls.max(1) as f64)
}

/// One row per (integrator, representation, step size).
pub fn integrator_table(cases: &[BenchCase], dts: &[f64], duration: f64, timing_calls: usize, lie: &LieModel, ss: &SsModel) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for (method, space) in all_pairs() {
        for &dt in dts {
            let rmse = terminal_rmse(cases, method, space, dt, duration, lie, ss)?;
            let ns = if timing_calls > 0 { time_per_step(&cases[0], method, space, dt, timing_calls, lie, ss)? } else { f64::NAN };
            rows.push(BenchRow { integrator: method.name().into(), space: space.name().into(), dt, rmse, ns_per_step: ns });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_law() {
        let dts = [1e-3, 1e-2, 1e-1];
        let errs: Vec<f64> = dts.iter().map(|d| 3.0 * d * d).collect();
        assert!((loglog_slope(&dts, &errs) - 2.0).abs() < 1e-12);
    }
}
