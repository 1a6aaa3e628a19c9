//! Seeded ground-truth simulator for the stochastic unicycle.
//!
//! The world integrates the true (mismatched) dynamics with forward Euler at a
//! fixed substep rate and perturbs the commanded wrench with Gaussian noise.
//! Every record and particle owns an RNG stream derived from the master seed,
//! so outputs do not depend on generation order or thread count.

mod dataset;

pub use dataset::{read_dataset, write_dataset, DatasetHeader, RecordLine, SCHEMA_VERSION};

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{step, ControlInput, LieModel, LieState, Method, SsModel, State};
use crate::error::{Error, Result};
use crate::grid::{GridCase, GridSpec};
use crate::se2::{Pose, Twist};

/// Name of the generator recorded in dataset headers.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng seeded from SHA-256(master || stream || index)";

/// Inertia of the approximate model, `diag(m, m, I)` in kg and kg m^2.
pub fn nominal_inertia() -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(2.8, 2.8, 0.007))
}

/// Seed of the `index`-th item of a named stream.
pub fn stream_seed(master: u64, stream: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((stream.len() as u64).to_le_bytes());
    h.update(stream.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Physical parameters of the simulated world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    pub true_inertia: Matrix3<f64>,
    /// Wrench noise covariance over `(fx, tz)`.
    pub q_cont: Matrix2<f64>,
    /// Viscous friction on body velocities, N s/m.
    pub c_lin: f64,
    /// Viscous friction on yaw rate, N m s/rad.
    pub c_ang: f64,
    pub substep_hz: f64,
    /// Planning step, seconds.
    pub horizon: f64,
    pub seed: u64,
    /// Draw fresh wrench noise at every substep instead of once per step.
    #[serde(default)]
    pub noise_per_substep: bool,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self::mismatched(&nominal_inertia(), 1.15, 1.3, 0.3, 0.005)
    }
}

impl WorldParams {
    /// World that differs from `model_inertia` by the given multipliers and friction.
    pub fn mismatched(model_inertia: &Matrix3<f64>, mass_mult: f64, rot_mult: f64, c_lin: f64, c_ang: f64) -> Self {
        let mut m = *model_inertia;
        m[(0, 0)] *= mass_mult;
        m[(1, 1)] *= mass_mult;
        m[(2, 2)] *= rot_mult;
        Self {
            true_inertia: m,
            q_cont: Matrix2::new(0.005, 0.0, 0.0, 0.001),
            c_lin,
            c_ang,
            substep_hz: 60.0,
            horizon: 0.5,
            seed: 0,
            noise_per_substep: false,
        }
    }

    /// World identical to the approximate model (no friction, same inertia).
    pub fn matched(model_inertia: &Matrix3<f64>) -> Self {
        Self::mismatched(model_inertia, 1.0, 1.0, 0.0, 0.0)
    }

    pub fn with_noise(mut self, q: Matrix2<f64>) -> Self {
        self.q_cont = q;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n_substeps(&self) -> Result<usize> {
        let n = self.substep_hz * self.horizon;
        if !(n >= 0.5) || (n - n.round()).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "substep rate x horizon must be a positive integer, got {n}"
            )));
        }
        Ok(n.round() as usize)
    }

    pub fn substep(&self) -> f64 {
        1.0 / self.substep_hz
    }

    pub fn validate(&self) -> Result<()> {
        self.n_substeps()?;
        if !(self.c_lin >= 0.0 && self.c_ang >= 0.0) {
            return Err(Error::InvalidArgument("friction coefficients must be non-negative".into()));
        }
        noise_factor(&self.q_cont).map(|_| ())
    }
}

/// `L` with `L L^T = q` for a symmetric PSD `q`.
pub(crate) fn noise_factor(q: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    if (q - q.transpose()).abs().max() > 1e-12 * q.abs().max().max(1.0) {
        return Err(Error::InvalidArgument("noise covariance must be symmetric".into()));
    }
    let eig = q.symmetric_eigen();
    let floor = -1e-12 * q.abs().max().max(1.0);
    if eig.eigenvalues.iter().any(|l| *l < floor) {
        return Err(Error::InvalidArgument("noise covariance must be positive semidefinite".into()));
    }
    let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(eig.eigenvectors * Matrix2::from_diagonal(&sqrt))
}

/// A world ready to step: parameters plus the derived models.
#[derive(Debug, Clone)]
pub struct World {
    params: WorldParams,
    lie: LieModel,
    ss: SsModel,
    factor: Matrix2<f64>,
    n_substeps: usize,
}

impl World {
    pub fn new(params: WorldParams) -> Result<Self> {
        params.validate()?;
        let lie = LieModel::unicycle(params.true_inertia)?
            .with_damping(Vector3::new(params.c_lin, params.c_lin, params.c_ang));
        let ss = SsModel::new(params.true_inertia)?;
        let factor = noise_factor(&params.q_cont)?;
        let n_substeps = params.n_substeps()?;
        Ok(Self { params, lie, ss, factor, n_substeps })
    }

    pub fn params(&self) -> &WorldParams {
        &self.params
    }

    pub fn n_substeps(&self) -> usize {
        self.n_substeps
    }

    fn draw_noise(&self, rng: &mut impl Rng) -> Vector2<f64> {
        let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        self.factor * z
    }

    /// One planning step under the commanded wrench plus sampled noise.
    pub fn step(&self, s: &LieState, u_des: &ControlInput, rng: &mut impl Rng) -> LieState {
        let dt = self.params.substep();
        let mut noise = self.draw_noise(rng);
        let mut state = State::Lie(*s);
        for k in 0..self.n_substeps {
            if self.params.noise_per_substep && k > 0 {
                noise = self.draw_noise(rng);
            }
            let u = ControlInput::from_vector(&(u_des.as_vector() + noise));
            state = step(&state, &u, dt, Method::ForwardEuler, &self.lie, &self.ss)
                .expect("forward Euler on a validated world cannot fail");
        }
        state.to_lie()
    }
}

/// One observed transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRecord {
    pub s0: LieState,
    pub u_des: ControlInput,
    pub s1: LieState,
    pub seed: u64,
}

pub fn true_step(s: &LieState, u_des: &ControlInput, world: &World, rng: &mut impl Rng) -> LieState {
    world.step(s, u_des, rng)
}

/// Start state and wrench for a grid case; accelerations are mapped to
/// wrenches through the approximate model inertia.
pub fn case_inputs(case: &GridCase, model_inertia: &Matrix3<f64>) -> (LieState, ControlInput) {
    (
        LieState::at_origin(Twist::new(case.vx0, 0.0, case.wz0)),
        ControlInput::from_accelerations(model_inertia, case.ddx, case.ddtheta),
    )
}

fn record_for(world: &World, s0: LieState, u: ControlInput, seed: u64) -> TransitionRecord {
    let mut rng = rng_from_seed(seed);
    let s1 = world.step(&s0, &u, &mut rng);
    TransitionRecord { s0, u_des: u, s1, seed }
}

/// All grid points times repetitions, in grid order with repetitions innermost.
pub fn gen_grid_dataset(grid: &GridSpec, world: &World, model_inertia: &Matrix3<f64>, stream: &str) -> Result<Vec<TransitionRecord>> {
    grid.validate()?;
    let cases = grid.cases();
    let reps = grid.reps;
    let master = world.params.seed;
    Ok((0..cases.len() * reps)
        .into_par_iter()
        .map(|i| {
            let (s0, u) = case_inputs(&cases[i / reps], model_inertia);
            record_for(world, s0, u, stream_seed(master, stream, i as u64))
        })
        .collect())
}

/// `n` records with start twist and accelerations drawn uniformly from the
/// grid's bounding box.
pub fn gen_box_dataset(grid: &GridSpec, world: &World, model_inertia: &Matrix3<f64>, n: usize, stream: &str) -> Result<Vec<TransitionRecord>> {
    grid.validate()?;
    let master = world.params.seed;
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let seed = stream_seed(master, stream, i as u64);
            let mut rng = rng_from_seed(seed);
            let t: [f64; 4] = [rng.random(), rng.random(), rng.random(), rng.random()];
            let (s0, u) = case_inputs(&grid.sample_box(t), model_inertia);
            let s1 = world.step(&s0, &u, &mut rng);
            TransitionRecord { s0, u_des: u, s1, seed }
        })
        .collect())
}

/// `n` independent outcomes of one planning step from `s0` under `u_des`.
pub fn mc_particles(s0: &LieState, u_des: &ControlInput, world: &World, n: usize, seed: u64) -> Result<Vec<Pose>> {
    if n == 0 {
        return Err(Error::InvalidArgument("particle count must be >= 1".into()));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(stream_seed(seed, "particles", i as u64));
            world.step(s0, u_des, &mut rng).pose
        })
        .collect())
}

/// Constant-wrench records from rest for inertia identification. Forces and
/// torques are spread over `[0.2, 1.4]` N and `[0.005, 0.02]` N m.
pub fn gen_inertia_records(world: &World, n: usize, stream: &str) -> Vec<TransitionRecord> {
    let master = world.params.seed;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = stream_seed(master, stream, i as u64);
            let mut rng = rng_from_seed(seed);
            let u = ControlInput::new(rng.random_range(0.2..1.4), rng.random_range(0.005..0.02));
            let s0 = LieState::at_origin(Twist::zero());
            let s1 = world.step(&s0, &u, &mut rng);
            TransitionRecord { s0, u_des: u, s1, seed }
        })
        .collect()
}

/// Diagonal inertia from finite-difference accelerations over `horizon`:
/// least-squares fits of `a = fx / m` and `alpha = tz / I` through the origin.
pub fn estimate_inertia(records: &[TransitionRecord], horizon: f64) -> Result<Matrix3<f64>> {
    if records.is_empty() {
        return Err(Error::Empty("inertia identification needs records"));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    // Regress the measured acceleration on the commanded wrench: the noise
    // lives in the response, so this direction is unbiased.
    let (mut fa, mut ff, mut tb, mut tt) = (0.0, 0.0, 0.0, 0.0);
    for r in records {
        let a = (r.s1.twist.vx - r.s0.twist.vx) / horizon;
        let b = (r.s1.twist.wz - r.s0.twist.wz) / horizon;
        fa += r.u_des.fx * a;
        ff += r.u_des.fx * r.u_des.fx;
        tb += r.u_des.tz * b;
        tt += r.u_des.tz * r.u_des.tz;
    }
    if fa == 0.0 || tb == 0.0 || ff == 0.0 || tt == 0.0 {
        return Err(Error::Degenerate("no linear or angular acceleration observed"));
    }
    let m = ff / fa;
    let i = tt / tb;
    if !(m > 0.0 && i > 0.0) {
        return Err(Error::Degenerate("fitted inertia is not positive"));
    }
    Ok(Matrix3::from_diagonal(&Vector3::new(m, m, i)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se2;

    fn noiseless() -> World {
        World::new(WorldParams::matched(&nominal_inertia()).with_noise(Matrix2::zeros())).unwrap()
    }

    #[test]
    fn degenerate_world_is_thirty_euler_steps() {
        let w = noiseless();
        let m = nominal_inertia();
        let lie = LieModel::unicycle(m).unwrap();
        let ss = SsModel::new(m).unwrap();
        let s0 = LieState::at_origin(Twist::new(0.3, 0.0, 0.25));
        let u = ControlInput::from_accelerations(&m, 0.4, 1.5);
        let mut s = State::Lie(s0);
        for _ in 0..30 {
            s = step(&s, &u, 1.0 / 60.0, Method::ForwardEuler, &lie, &ss).unwrap();
        }
        assert_eq!(w.step(&s0, &u, &mut rng_from_seed(1)), s.to_lie());
    }

    #[test]
    fn default_noise_and_substeps() {
        let p = WorldParams::default();
        assert_eq!(p.q_cont, Matrix2::new(0.005, 0.0, 0.0, 0.001));
        assert_eq!(p.n_substeps().unwrap(), 30);
        let mut bad = p.clone();
        bad.horizon = 0.51;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let w = World::new(WorldParams::default()).unwrap();
        let s0 = LieState::at_origin(Twist::new(0.3, 0.0, 0.1));
        let u = ControlInput::new(1.0, 0.01);
        let a = w.step(&s0, &u, &mut rng_from_seed(99));
        let b = w.step(&s0, &u, &mut rng_from_seed(99));
        assert_eq!(a, b);
        assert_ne!(a, w.step(&s0, &u, &mut rng_from_seed(100)));
    }

    #[test]
    fn stream_seeds_differ_by_name_and_index() {
        let a = stream_seed(7, "cal", 0);
        assert_ne!(a, stream_seed(7, "cal", 1));
        assert_ne!(a, stream_seed(7, "val", 0));
        assert_ne!(a, stream_seed(8, "cal", 0));
        assert_eq!(a, stream_seed(7, "cal", 0));
    }

    #[test]
    fn dataset_sizes() {
        let w = World::new(WorldParams::default()).unwrap();
        let m = nominal_inertia();
        assert_eq!(gen_grid_dataset(&GridSpec::standard(2, 10), &w, &m, "cal").unwrap().len(), 160);
        let val = GridSpec::standard(5, 1);
        assert_eq!(val.cases().len(), 625);
        let big = GridSpec::standard(3, 500);
        assert_eq!(big.n_points() * big.reps, 40_500);
    }

    #[test]
    fn grid_records_start_at_origin_and_stay_admissible() {
        let w = World::new(WorldParams::default()).unwrap();
        let recs = gen_grid_dataset(&GridSpec::standard(2, 3), &w, &nominal_inertia(), "cal").unwrap();
        for r in &recs {
            assert_eq!(r.s0.pose, Pose::identity());
            assert!(r.s1.twist.vy.abs() < 1e-9);
        }
        // repetitions at one grid point share inputs but not outcomes
        assert_eq!(recs[0].u_des, recs[1].u_des);
        assert_ne!(recs[0].s1, recs[1].s1);
    }

    #[test]
    fn generation_is_order_independent() {
        let w = World::new(WorldParams::default().with_seed(3)).unwrap();
        let g = GridSpec::standard(2, 2);
        let m = nominal_inertia();
        let a = gen_grid_dataset(&g, &w, &m, "cal").unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| gen_grid_dataset(&g, &w, &m, "cal").unwrap());
        assert_eq!(a, b);
        // record i can be regenerated from its seed alone
        let r = a[5];
        assert_eq!(record_for(&w, r.s0, r.u_des, r.seed), r);
    }

    #[test]
    fn zero_noise_particles_coincide() {
        let w = noiseless();
        let ps = mc_particles(&LieState::at_origin(Twist::new(0.3, 0.0, 0.2)), &ControlInput::new(0.5, 0.01), &w, 50, 4).unwrap();
        assert!(ps.iter().all(|p| *p == ps[0]));
        assert!(mc_particles(&LieState::default(), &ControlInput::default(), &w, 0, 0).is_err());
    }

    fn particle_error_stats(scale: f64) -> (Vector3<f64>, Vector3<f64>) {
        let q = Matrix2::new(0.005, 0.0, 0.0, 0.001) * scale;
        let w = World::new(WorldParams::default().with_noise(q)).unwrap();
        let calm = World::new(WorldParams::default().with_noise(Matrix2::zeros())).unwrap();
        let s0 = LieState::at_origin(Twist::new(0.3, 0.0, 0.25));
        let u = ControlInput::from_accelerations(&nominal_inertia(), 0.25, 1.0);
        let center = calm.step(&s0, &u, &mut rng_from_seed(0)).pose;
        let n = 10_000;
        let ps = mc_particles(&s0, &u, &w, n, 11).unwrap();
        let errs: Vec<Vector3<f64>> = ps.iter().map(|p| se2::group_error(&center, p).unwrap()).collect();
        let mean = errs.iter().fold(Vector3::zeros(), |a, e| a + e) / n as f64;
        let bound = Vector3::from_fn(|k, _| {
            let var = errs.iter().map(|e| (e[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1) as f64;
            3.0 * var.sqrt() / (n as f64).sqrt()
        });
        (mean, bound)
    }

    #[test]
    fn particle_mean_matches_noiseless_rollout() {
        // heading and lateral coordinates are unbiased at the default noise level
        let (mean, bound) = particle_error_stats(1.0);
        for k in 1..3 {
            assert!(mean[k].abs() < bound[k], "coordinate {k}: {} vs {}", mean[k], bound[k]);
        }
        // the forward coordinate picks up a heading-variance bias that is
        // quadratic in the noise; it vanishes against the CLT band for small noise
        assert!(mean[0].abs() > bound[0]);
        let (mean, bound) = particle_error_stats(1e-4);
        for k in 0..3 {
            assert!(mean[k].abs() < bound[k], "coordinate {k}: {} vs {}", mean[k], bound[k]);
        }
    }

    #[test]
    fn inertia_recovered_from_noiseless_records() {
        let w = World::new(WorldParams::matched(&nominal_inertia()).with_noise(Matrix2::zeros())).unwrap();
        let recs = gen_inertia_records(&w, 200, "sysid");
        let m = estimate_inertia(&recs, w.params().horizon).unwrap();
        let truth = nominal_inertia();
        for k in 0..3 {
            assert!((m[(k, k)] / truth[(k, k)] - 1.0).abs() < 0.01);
        }
        let one = estimate_inertia(&recs[..1], w.params().horizon).unwrap();
        assert!((one[(0, 0)] - 2.8).abs() < 1e-9 && (one[(2, 2)] - 0.007).abs() < 1e-12);
    }

    #[test]
    fn inertia_fit_rejects_degenerate_data() {
        let w = noiseless();
        let mut recs = gen_inertia_records(&w, 3, "sysid");
        for r in recs.iter_mut() {
            r.s1.twist = r.s0.twist;
        }
        assert!(matches!(estimate_inertia(&recs, 0.5), Err(Error::Degenerate(_))));
        assert!(estimate_inertia(&[], 0.5).is_err());
    }

    #[test]
    fn noisy_inertia_error_shrinks_with_data() {
        let w = World::new(WorldParams::matched(&nominal_inertia())).unwrap();
        let truth = nominal_inertia()[(2, 2)];
        let mse = |n: usize| {
            (0..20)
                .map(|rep| {
                    let recs = gen_inertia_records(&w, n, &format!("sysid-{rep}"));
                    (estimate_inertia(&recs, 0.5).unwrap()[(2, 2)] - truth).powi(2)
                })
                .sum::<f64>()
                / 20.0
        };
        assert!(mse(200) < mse(20));
    }
}
