//! One-step Gaussian predictors.
//!
//! Both filters run the prediction step only: the mean follows forward-Euler
//! substeps of the approximate model and the covariance is pushed through
//! central-difference Jacobians of the exact one-substep map. The InEKF works
//! in left-invariant error coordinates `(log(g~^-1 g), xi - xi~)`, the SS EKF in
//! additive `(q, dq)` errors.
//!
//! Wrench noise is carried as two extra error coordinates. When it is held
//! over the planning step those coordinates are propagated unchanged; when it
//! is redrawn every substep they are reset before each substep, which is the
//! usual `F P F^T + G Q G^T` update.

use std::fmt;

use nalgebra::{Matrix2, Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{step, ControlInput, LieModel, LieState, Method, SsModel, SsState, State};
use crate::error::{Error, Result};
use crate::fingerprint::fingerprint;
use crate::se2::{self, Pose, Twist};
use crate::simulate::TransitionRecord;

/// Central-difference step for the substep Jacobians.
pub const FD_STEP: f64 = 1e-6;

type Cov8 = SMatrix<f64, 8, 8>;
type Jac = SMatrix<f64, 6, 8>;

/// Coordinates of a predicted pose covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    /// Exponential coordinates of `g~^-1 g`.
    ExpCoordsLeft,
    /// Differences of `(x, y, theta)`.
    Generalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrediction {
    pub pose: Pose,
    pub twist: Twist,
    pub cov: Matrix3<f64>,
    pub frame: Frame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NoiseTiming {
    /// One draw held over the planning step.
    Held,
    /// Independent draws at every substep: `G Q0 G^T` is added per substep.
    #[default]
    PerSubstep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Wrench covariance over `(fx, tz)`.
    pub q0: Matrix2<f64>,
    #[serde(default)]
    pub timing: NoiseTiming,
}

impl NoiseConfig {
    pub fn held(q0: Matrix2<f64>) -> Self {
        Self { q0, timing: NoiseTiming::Held }
    }

    pub fn per_substep(q0: Matrix2<f64>) -> Self {
        Self { q0, timing: NoiseTiming::PerSubstep }
    }

    pub fn validate(&self) -> Result<()> {
        crate::simulate::noise_factor(&self.q0).map(|_| ())
    }
}

/// Everything a model-based predictor needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub inertia: Matrix3<f64>,
    pub noise: NoiseConfig,
    pub substep_hz: f64,
    pub horizon: f64,
}

impl PredictorConfig {
    pub fn new(inertia: Matrix3<f64>, noise: NoiseConfig) -> Self {
        Self { inertia, noise, substep_hz: 60.0, horizon: 0.5 }
    }

    fn n_substeps(&self) -> Result<usize> {
        let n = self.substep_hz * self.horizon;
        if !(n >= 0.5) || (n - n.round()).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("substep rate x horizon must be a positive integer, got {n}")));
        }
        Ok(n.round() as usize)
    }
}

/// Symmetrizes and lifts eigenvalues to at least `1e-12 * max(trace / d, 1)`.
pub fn regularize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let floor = 1e-12 * (sym.trace() / 3.0).max(1.0);
    let eig = sym.symmetric_eigen();
    if eig.eigenvalues.iter().all(|l| *l >= floor) {
        return sym;
    }
    let lifted = eig.eigenvalues.map(|l| l.max(floor));
    let out = eig.eigenvectors * Matrix3::from_diagonal(&lifted) * eig.eigenvectors.transpose();
    (out + out.transpose()) * 0.5
}

fn fd_jacobian(map: impl Fn(&SVector<f64, 8>) -> SVector<f64, 6>) -> Jac {
    let mut j = Jac::zeros();
    for k in 0..8 {
        let mut plus = SVector::<f64, 8>::zeros();
        plus[k] = FD_STEP;
        let col = (map(&plus) - map(&-plus)) / (2.0 * FD_STEP);
        j.set_column(k, &col);
    }
    j
}

fn augmented(j: &Jac) -> Cov8 {
    let mut phi = Cov8::identity();
    phi.fixed_view_mut::<6, 8>(0, 0).copy_from(j);
    phi
}

fn initial_cov(noise: &NoiseConfig) -> Cov8 {
    let mut p = Cov8::zeros();
    p.fixed_view_mut::<2, 2>(6, 6).copy_from(&noise.q0);
    p
}

fn reset_noise_block(p: &mut Cov8, q0: &Matrix2<f64>) {
    for i in 0..8 {
        for k in 6..8 {
            p[(i, k)] = 0.0;
            p[(k, i)] = 0.0;
        }
    }
    p.fixed_view_mut::<2, 2>(6, 6).copy_from(q0);
}

fn perturbed_input(u: &ControlInput, e: &SVector<f64, 8>) -> ControlInput {
    ControlInput::new(u.fx + e[6], u.tz + e[7])
}

/// Joint 6x6 covariance over (pose error, twist error) and the mean after one
/// planning step of the Lie-group filter.
pub fn inekf_propagate(s0: &LieState, u: &ControlInput, cfg: &PredictorConfig) -> Result<(LieState, SMatrix<f64, 6, 6>)> {
    cfg.noise.validate()?;
    let n = cfg.n_substeps()?;
    let h = 1.0 / cfg.substep_hz;
    let lie = LieModel::unicycle(cfg.inertia)?;
    let ss = SsModel::new(cfg.inertia)?;
    let fe = |s: &LieState, u: &ControlInput| -> Result<LieState> {
        Ok(step(&State::Lie(*s), u, h, Method::ForwardEuler, &lie, &ss)?.to_lie())
    };
    let mut mean = *s0;
    let mut p = initial_cov(&cfg.noise);
    for _ in 0..n {
        if cfg.noise.timing == NoiseTiming::PerSubstep {
            reset_noise_block(&mut p, &cfg.noise.q0);
        }
        let next = fe(&mean, u)?;
        let xi = mean.twist.as_vector();
        let next_xi = next.twist.as_vector();
        let j = fd_jacobian(|e| {
            let eta = Vector3::new(e[0], e[1], e[2]);
            let s = LieState::new(mean.pose.compose(&se2::exp(&eta)), Twist::from_vector(&(xi + Vector3::new(e[3], e[4], e[5]))));
            let out = fe(&s, &perturbed_input(u, e)).expect("validated substep");
            let eta1 = se2::group_error(&next.pose, &out.pose).expect("perturbation stays near the mean");
            let d = out.twist.as_vector() - next_xi;
            SVector::<f64, 6>::new(eta1.x, eta1.y, eta1.z, d.x, d.y, d.z)
        });
        let phi = augmented(&j);
        p = phi * p * phi.transpose();
        mean = next;
    }
    Ok((mean, p.fixed_view::<6, 6>(0, 0).into_owned()))
}

/// Lie-group (invariant) EKF prediction; covariance in exponential coordinates.
pub fn inekf_predict(s0: &LieState, u: &ControlInput, cfg: &PredictorConfig) -> Result<GaussianPrediction> {
    let (mean, p) = inekf_propagate(s0, u, cfg)?;
    Ok(GaussianPrediction {
        pose: mean.pose,
        twist: mean.twist,
        cov: regularize(&p.fixed_view::<3, 3>(0, 0).into_owned()),
        frame: Frame::ExpCoordsLeft,
    })
}

/// State-space EKF prediction; covariance over `(x, y, theta)` differences.
pub fn ekf_predict_ss(s0: &LieState, u: &ControlInput, cfg: &PredictorConfig) -> Result<GaussianPrediction> {
    cfg.noise.validate()?;
    let n = cfg.n_substeps()?;
    let h = 1.0 / cfg.substep_hz;
    let lie = LieModel::unicycle(cfg.inertia)?;
    let ss = SsModel::new(cfg.inertia)?;
    let fe = |s: &SsState, u: &ControlInput| -> Result<SsState> {
        match step(&State::StateSpace(*s), u, h, Method::ForwardEuler, &lie, &ss)? {
            State::StateSpace(x) => Ok(x),
            State::Lie(_) => unreachable!("state-space step returns a state-space state"),
        }
    };
    let mut mean = SsState::from_lie(s0);
    let mut p = initial_cov(&cfg.noise);
    for _ in 0..n {
        if cfg.noise.timing == NoiseTiming::PerSubstep {
            reset_noise_block(&mut p, &cfg.noise.q0);
        }
        let next = fe(&mean, u)?;
        let j = fd_jacobian(|e| {
            let s = SsState { q: mean.q + Vector3::new(e[0], e[1], e[2]), dq: mean.dq + Vector3::new(e[3], e[4], e[5]) };
            let out = fe(&s, &perturbed_input(u, e)).expect("validated substep");
            let dq = out.q - next.q;
            let dv = out.dq - next.dq;
            SVector::<f64, 6>::new(dq.x, dq.y, dq.z, dv.x, dv.y, dv.z)
        });
        let phi = augmented(&j);
        p = phi * p * phi.transpose();
        mean = next;
    }
    let lie_mean = mean.to_lie();
    Ok(GaussianPrediction {
        pose: lie_mean.pose,
        twist: lie_mean.twist,
        cov: regularize(&p.fixed_view::<3, 3>(0, 0).into_owned()),
        frame: Frame::Generalized,
    })
}

/// A fixed one-step predictor.
pub trait Predictor: Send + Sync {
    fn name(&self) -> &'static str;
    fn predict(&self, s0: &LieState, u: &ControlInput) -> Result<GaussianPrediction>;
    /// Stable hex digest of everything that determines the predictions.
    fn fingerprint(&self) -> String;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InEkf {
    pub config: PredictorConfig,
}

impl InEkf {
    pub fn new(config: PredictorConfig) -> Self {
        Self { config }
    }
}

impl Predictor for InEkf {
    fn name(&self) -> &'static str {
        "InEKF"
    }

    fn predict(&self, s0: &LieState, u: &ControlInput) -> Result<GaussianPrediction> {
        inekf_predict(s0, u, &self.config)
    }

    fn fingerprint(&self) -> String {
        fingerprint(&(self.name(), &self.config))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SsEkf {
    pub config: PredictorConfig,
}

impl SsEkf {
    pub fn new(config: PredictorConfig) -> Self {
        Self { config }
    }
}

impl Predictor for SsEkf {
    fn name(&self) -> &'static str {
        "SS-EKF"
    }

    fn predict(&self, s0: &LieState, u: &ControlInput) -> Result<GaussianPrediction> {
        ekf_predict_ss(s0, u, &self.config)
    }

    fn fingerprint(&self) -> String {
        fingerprint(&(self.name(), &self.config))
    }
}

/// One-step errors `log(g~1^-1 g1)` of a predictor over a dataset.
pub fn calibration_errors(records: &[TransitionRecord], predictor: &dyn Predictor) -> Result<Vec<Vector3<f64>>> {
    records
        .iter()
        .map(|r| {
            let pred = predictor.predict(&r.s0, &r.u_des)?;
            se2::group_error(&pred.pose, &r.s1.pose)
        })
        .collect()
}

fn check_nonempty(errors: &[Vector3<f64>]) -> Result<()> {
    if errors.is_empty() {
        Err(Error::Empty("covariance fit needs at least one error sample"))
    } else {
        Ok(())
    }
}

/// Uncentered second moment `mean(e e^T)`, regularized.
pub fn second_moment_cov(errors: &[Vector3<f64>]) -> Result<Matrix3<f64>> {
    check_nonempty(errors)?;
    let s = errors.iter().fold(Matrix3::zeros(), |acc, e| acc + e * e.transpose());
    Ok(regularize(&(s / errors.len() as f64)))
}

/// Mean error and centered (maximum-likelihood) covariance, regularized.
pub fn mle_bias_cov(errors: &[Vector3<f64>]) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    check_nonempty(errors)?;
    let n = errors.len() as f64;
    let b = errors.iter().fold(Vector3::zeros(), |acc, e| acc + e) / n;
    let s = errors.iter().fold(Matrix3::zeros(), |acc, e| {
        let d = e - b;
        acc + d * d.transpose()
    });
    Ok((b, regularize(&(s / n))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitKind {
    SecondMoment,
    Mle,
}

impl fmt::Display for FitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitKind::SecondMoment => "2M",
            FitKind::Mle => "MLE",
        })
    }
}

/// InEKF mean with a covariance (and for MLE a bias) fitted to calibration
/// errors. The covariance does not depend on the query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedInEkf {
    pub base: InEkf,
    pub kind: FitKind,
    pub bias: Vector3<f64>,
    pub cov: Matrix3<f64>,
}

impl FittedInEkf {
    pub fn fit(base: InEkf, kind: FitKind, records: &[TransitionRecord]) -> Result<Self> {
        let errors = calibration_errors(records, &base)?;
        let (bias, cov) = match kind {
            FitKind::SecondMoment => (Vector3::zeros(), second_moment_cov(&errors)?),
            FitKind::Mle => mle_bias_cov(&errors)?,
        };
        Ok(Self { base, kind, bias, cov })
    }
}

impl Predictor for FittedInEkf {
    fn name(&self) -> &'static str {
        match self.kind {
            FitKind::SecondMoment => "InEKF+2M",
            FitKind::Mle => "InEKF+MLE",
        }
    }

    fn predict(&self, s0: &LieState, u: &ControlInput) -> Result<GaussianPrediction> {
        let mut p = self.base.predict(s0, u)?;
        p.pose = p.pose.compose(&se2::exp(&self.bias));
        p.cov = self.cov;
        Ok(p)
    }

    fn fingerprint(&self) -> String {
        fingerprint(&(self.name(), &self.base.config, &self.bias, &self.cov))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{mc_particles, nominal_inertia, World, WorldParams};

    fn cfg(q0: Matrix2<f64>) -> PredictorConfig {
        PredictorConfig::new(nominal_inertia(), NoiseConfig::held(q0))
    }

    fn q_cont() -> Matrix2<f64> {
        Matrix2::new(0.005, 0.0, 0.0, 0.001)
    }

    fn sample_cov(errs: &[Vector3<f64>]) -> Matrix3<f64> {
        let n = errs.len() as f64;
        let m = errs.iter().fold(Vector3::zeros(), |a, e| a + e) / n;
        errs.iter().fold(Matrix3::zeros(), |a, e| a + (e - m) * (e - m).transpose()) / (n - 1.0)
    }

    #[test]
    fn zero_noise_gives_floor_covariance_and_deterministic_mean() {
        let s0 = LieState::at_origin(Twist::new(0.3, 0.0, 0.2));
        let u = ControlInput::new(0.7, 0.007);
        let p = inekf_predict(&s0, &u, &cfg(Matrix2::zeros())).unwrap();
        assert!((p.cov - Matrix3::identity() * 1e-12).abs().max() < 1e-20);
        let w = World::new(WorldParams::matched(&nominal_inertia()).with_noise(Matrix2::zeros())).unwrap();
        let truth = w.step(&s0, &u, &mut crate::simulate::rng_from_seed(0));
        assert_eq!(p.pose, truth.pose);
        let q = ekf_predict_ss(&s0, &u, &cfg(Matrix2::zeros())).unwrap();
        assert!((q.cov - Matrix3::identity() * 1e-12).abs().max() < 1e-20);
        assert_eq!(q.frame, Frame::Generalized);
    }

    #[test]
    fn ss_and_lie_means_agree() {
        let s0 = LieState::at_origin(Twist::new(0.5, 0.0, 0.5));
        let u = ControlInput::from_accelerations(&nominal_inertia(), 0.5, 2.0);
        let a = inekf_predict(&s0, &u, &cfg(q_cont())).unwrap();
        let b = ekf_predict_ss(&s0, &u, &cfg(q_cont())).unwrap();
        // both are first order with h = 1/60 over 0.5 s
        assert!((a.pose.translation() - b.pose.translation()).norm() < 2e-2);
        assert!((a.pose.theta - b.pose.theta).abs() < 1e-12);
    }

    fn mc_errors(s0: &LieState, u: &ControlInput, scale: f64, n: usize) -> (GaussianPrediction, Vec<Vector3<f64>>) {
        let q = q_cont() * scale;
        let pred = inekf_predict(s0, u, &cfg(q)).unwrap();
        let w = World::new(WorldParams::matched(&nominal_inertia()).with_noise(q)).unwrap();
        let ps = mc_particles(s0, u, &w, n, 5).unwrap();
        let errs = ps.iter().map(|p| se2::group_error(&pred.pose, p).unwrap()).collect();
        (pred, errs)
    }

    #[test]
    fn small_noise_covariance_matches_monte_carlo() {
        let s0 = LieState::at_origin(Twist::new(0.3, 0.0, 0.25));
        let u = ControlInput::from_accelerations(&nominal_inertia(), 0.25, 1.0);
        let (pred, errs) = mc_errors(&s0, &u, 0.01, 100_000);
        let mc = sample_cov(&errs);
        let rel = (mc - pred.cov).norm() / mc.norm();
        assert!(rel < 0.15, "relative Frobenius error {rel}");
    }

    #[test]
    fn straight_line_has_lateral_heading_correlation() {
        let s0 = LieState::at_origin(Twist::new(0.4, 0.0, 0.0));
        let u = ControlInput::new(0.5, 0.0);
        let q = Matrix2::new(0.0, 0.0, 0.0, 1e-5);
        let pred = inekf_predict(&s0, &u, &cfg(q)).unwrap();
        let w = World::new(WorldParams::matched(&nominal_inertia()).with_noise(q)).unwrap();
        let errs: Vec<_> = mc_particles(&s0, &u, &w, 20_000, 8)
            .unwrap()
            .iter()
            .map(|p| se2::group_error(&pred.pose, p).unwrap())
            .collect();
        let mc = sample_cov(&errs);
        assert!(pred.cov[(1, 2)].abs() > 1e-3 * (pred.cov[(1, 1)] * pred.cov[(2, 2)]).sqrt());
        assert_eq!(pred.cov[(1, 2)].signum(), mc[(1, 2)].signum());
    }

    #[test]
    fn rotation_in_place_spreads_only_heading() {
        let s0 = LieState::at_origin(Twist::zero());
        let u = ControlInput::new(0.0, 0.01);
        let p = ekf_predict_ss(&s0, &u, &cfg(Matrix2::new(0.0, 0.0, 0.0, 0.001))).unwrap();
        assert!(p.cov[(0, 0)] < 1e-11 && p.cov[(1, 1)] < 1e-11);
        assert!(p.cov[(2, 2)] > 1e-3);
    }

    #[test]
    fn covariance_is_left_invariant() {
        let u = ControlInput::new(0.6, 0.01);
        let twist = Twist::new(0.3, 0.0, 0.4);
        let a = inekf_predict(&LieState::at_origin(twist), &u, &cfg(q_cont())).unwrap();
        let b = inekf_predict(&LieState::new(Pose::new(3.0, -2.0, 2.5), twist), &u, &cfg(q_cont())).unwrap();
        // equal up to finite-difference roundoff
        assert!((a.cov - b.cov).abs().max() < 1e-7 * a.cov.abs().max());
    }

    #[test]
    fn per_substep_noise_is_smaller_than_held_noise() {
        let s0 = LieState::at_origin(Twist::new(0.3, 0.0, 0.2));
        let u = ControlInput::new(0.5, 0.005);
        let held = inekf_predict(&s0, &u, &cfg(q_cont())).unwrap();
        let mut c = cfg(q_cont());
        c.noise.timing = NoiseTiming::PerSubstep;
        let fresh = inekf_predict(&s0, &u, &c).unwrap();
        assert!(fresh.cov.trace() < held.cov.trace());
    }

    #[test]
    fn moment_fits_on_hand_examples() {
        let e = [Vector3::new(1.0, 0.0, 0.0), Vector3::new(-1.0, 0.0, 0.0)];
        let m = second_moment_cov(&e).unwrap();
        assert!((m - Matrix3::from_diagonal(&Vector3::new(1.0, 1e-12, 1e-12))).abs().max() < 1e-15);
        let (b, _) = mle_bias_cov(&e).unwrap();
        assert_eq!(b, Vector3::zeros());
        let c = Vector3::new(0.1, -0.2, 0.3);
        let (b, q) = mle_bias_cov(&[c; 5]).unwrap();
        assert!((b - c).norm() < 1e-16);
        assert!((q - Matrix3::identity() * 1e-12).abs().max() < 1e-18);
        assert!(second_moment_cov(&[]).is_err());
        assert_eq!(second_moment_cov(&[Vector3::zeros(); 4]).unwrap(), Matrix3::identity() * 1e-12);
    }

    #[test]
    fn second_moment_is_mle_plus_bias_outer_product() {
        let errs: Vec<Vector3<f64>> = (0..50)
            .map(|i| {
                let t = i as f64;
                Vector3::new((t * 0.37).sin() + 0.2, (t * 0.91).cos() * 0.5, (t * 1.3).sin() * 0.1 - 0.05)
            })
            .collect();
        let m2 = second_moment_cov(&errs).unwrap();
        let (b, q) = mle_bias_cov(&errs).unwrap();
        assert!((m2 - (q + b * b.transpose())).abs().max() < 1e-12);
    }

    #[test]
    fn friction_mismatch_gives_negative_forward_bias() {
        let world = World::new(WorldParams::default().with_noise(Matrix2::zeros())).unwrap();
        let recs = crate::simulate::gen_grid_dataset(&crate::grid::GridSpec::standard(2, 1), &world, &nominal_inertia(), "cal").unwrap();
        let base = InEkf::new(cfg(q_cont() * 0.25));
        let fitted = FittedInEkf::fit(base, FitKind::Mle, &recs).unwrap();
        assert!(fitted.bias.x < 0.0);
    }

    #[test]
    fn fitted_covariances_ignore_the_action() {
        let world = World::new(WorldParams::default()).unwrap();
        let recs = crate::simulate::gen_grid_dataset(&crate::grid::GridSpec::standard(2, 2), &world, &nominal_inertia(), "cal").unwrap();
        for kind in [FitKind::SecondMoment, FitKind::Mle] {
            let f = FittedInEkf::fit(InEkf::new(cfg(q_cont())), kind, &recs).unwrap();
            let s0 = LieState::at_origin(Twist::new(0.2, 0.0, 0.1));
            let a = f.predict(&s0, &ControlInput::new(0.1, 0.0)).unwrap();
            let b = f.predict(&s0, &ControlInput::new(1.4, 0.014)).unwrap();
            assert_eq!(a.cov, b.cov);
            assert_ne!(a.pose, b.pose);
        }
    }

    #[test]
    fn regularize_lifts_negative_eigenvalues() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1e-3, 0.0, 0.0, 0.0, 2.0);
        let r = regularize(&m);
        let eig = r.symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|l| *l >= 1e-12 * 0.999));
        assert_eq!(r, r.transpose());
    }
}
