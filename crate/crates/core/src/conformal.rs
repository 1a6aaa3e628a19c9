//! Nonconformity scores, the split-conformal quantile and calibration of
//! Gaussian predictors.
//!
//! A calibrated Lie-Mahalanobis region is `{g : r(g)^2 <= q_hat^2}`, which is
//! the `1 - alpha` chi-square ellipsoid of the predicted Gaussian with its
//! covariance scaled by `zeta = q_hat^2 / chi2_alpha(3)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::estimate::{Frame, GaussianPrediction, Predictor};
use crate::fingerprint::fingerprint;
use crate::se2::{self, Pose};
use crate::simulate::{RecordLine, TransitionRecord};

/// Dimension of SE(2) and of its configuration space.
pub const DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreKind {
    /// Mahalanobis norm of `log(g~^-1 g)`.
    ClapsMahalanobisLie,
    /// Mahalanobis norm of wrapped `(x, y, theta)` differences.
    MahalanobisSS,
    /// Euclidean norm of wrapped `(x, y, theta)` differences.
    L2SS,
    /// Euclidean norm of `log(g~^-1 g)`.
    L2Lie,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 4] = [ScoreKind::ClapsMahalanobisLie, ScoreKind::MahalanobisSS, ScoreKind::L2SS, ScoreKind::L2Lie];

    pub fn frame(&self) -> Frame {
        match self {
            ScoreKind::ClapsMahalanobisLie | ScoreKind::L2Lie => Frame::ExpCoordsLeft,
            ScoreKind::MahalanobisSS | ScoreKind::L2SS => Frame::Generalized,
        }
    }

    pub fn uses_covariance(&self) -> bool {
        matches!(self, ScoreKind::ClapsMahalanobisLie | ScoreKind::MahalanobisSS)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScoreKind::ClapsMahalanobisLie => "mahalanobis-lie",
            ScoreKind::MahalanobisSS => "mahalanobis-ss",
            ScoreKind::L2SS => "l2-ss",
            ScoreKind::L2Lie => "l2-lie",
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoreKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown score kind {s}")))
    }
}

/// Error vector of `truth` relative to the prediction in the frame of `kind`.
pub fn residual(kind: ScoreKind, truth: &Pose, pred: &GaussianPrediction) -> Result<Vector3<f64>> {
    if pred.frame != kind.frame() {
        return Err(Error::KindMismatch(format!("{kind} needs a {:?} prediction, got {:?}", kind.frame(), pred.frame)));
    }
    match kind.frame() {
        Frame::ExpCoordsLeft => se2::group_error(&pred.pose, truth),
        Frame::Generalized => Ok(Vector3::new(
            truth.x - pred.pose.x,
            truth.y - pred.pose.y,
            se2::wrap_angle_upper(truth.theta - pred.pose.theta),
        )),
    }
}

/// `sqrt(e^T cov^-1 e)` through a Cholesky solve.
pub fn mahalanobis(e: &Vector3<f64>, cov: &Matrix3<f64>) -> Result<f64> {
    let chol = cov.cholesky().ok_or(Error::Singular("prediction covariance is not positive definite"))?;
    let y = chol.l().solve_lower_triangular(e).ok_or(Error::Singular("prediction covariance is not positive definite"))?;
    Ok(y.norm())
}

pub fn score(kind: ScoreKind, truth: &Pose, pred: &GaussianPrediction) -> Result<f64> {
    let e = residual(kind, truth, pred)?;
    if kind.uses_covariance() {
        mahalanobis(&e, &pred.cov)
    } else {
        Ok(e.norm())
    }
}

/// Index (1-based) of the calibration order statistic, `ceil((1 - alpha)(n + 1))`.
pub fn quantile_rank(n: usize, alpha: f64) -> usize {
    // the small slack keeps exact products such as 0.9 * 20 from rounding up
    ((1.0 - alpha) * (n as f64 + 1.0) - 1e-9).ceil().max(1.0) as usize
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Split-conformal quantile; `+inf` when the rank exceeds the sample size.
pub fn split_quantile(scores: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if scores.is_empty() {
        return Err(Error::Empty("no calibration scores"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("calibration scores contain NaN".into()));
    }
    let k = quantile_rank(scores.len(), alpha);
    if k > scores.len() {
        return Ok(f64::INFINITY);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[k - 1])
}

/// Chi-square CDF with `d` degrees of freedom.
pub fn chi2_cdf(x: f64, d: usize) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(d as f64 / 2.0, x / 2.0)
    }
}

fn chi2_pdf(x: f64, d: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = d as f64 / 2.0;
    ((k - 1.0) * x.ln() - x / 2.0 - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

/// Upper `alpha` point of chi-square with `d` degrees of freedom, by
/// bracketing and bisection followed by Newton polishing.
pub fn chi2_quantile(alpha: f64, d: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if d == 0 {
        return Err(Error::InvalidArgument("degrees of freedom must be >= 1".into()));
    }
    let target = 1.0 - alpha;
    let f = |x: f64| chi2_cdf(x, d) - target;
    let (mut lo, mut hi) = (0.0, d as f64 + 1.0);
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..8 {
        let p = chi2_pdf(x, d);
        if p <= 0.0 {
            break;
        }
        let next = x - f(x) / p;
        if !(next > lo && next < hi) {
            break;
        }
        x = next;
    }
    Ok(x)
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Outcome of offline calibration. Infinite values are written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub alpha: f64,
    pub n_cal: usize,
    #[serde(with = "finite_or_null")]
    pub q_hat: f64,
    /// `q_hat^2 / chi2_q`; only meaningful for Mahalanobis kinds.
    #[serde(with = "finite_or_null")]
    pub zeta: f64,
    pub score_kind: ScoreKind,
    pub chi2_q: f64,
    pub vacuous: bool,
    pub predictor: String,
    pub predictor_fingerprint: String,
    pub dataset_fingerprint: String,
}

impl CalibrationResult {
    /// The predictor's own `1 - alpha` Gaussian region, without calibration.
    pub fn uncalibrated(predictor: &dyn Predictor, kind: ScoreKind, alpha: f64) -> Result<Self> {
        let chi2_q = chi2_quantile(alpha, DIM)?;
        Ok(Self {
            alpha,
            n_cal: 0,
            q_hat: chi2_q.sqrt(),
            zeta: 1.0,
            score_kind: kind,
            chi2_q,
            vacuous: false,
            predictor: predictor.name().to_string(),
            predictor_fingerprint: predictor.fingerprint(),
            dataset_fingerprint: String::new(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn dataset_fingerprint(records: &[TransitionRecord]) -> String {
    let lines: Vec<RecordLine> = records.iter().map(RecordLine::from).collect();
    fingerprint(&lines)
}

/// Scores of every calibration record, in record order.
pub fn calibration_scores(predictor: &dyn Predictor, records: &[TransitionRecord], kind: ScoreKind) -> Result<Vec<f64>> {
    records
        .par_iter()
        .map(|r| score(kind, &r.s1.pose, &predictor.predict(&r.s0, &r.u_des)?))
        .collect()
}

/// `(q_hat, zeta, chi2_q, vacuous)` from precomputed scores.
pub fn calibrate_scores(scores: &[f64], alpha: f64) -> Result<(f64, f64, f64, bool)> {
    let q_hat = split_quantile(scores, alpha)?;
    let chi2_q = chi2_quantile(alpha, DIM)?;
    let vacuous = q_hat.is_infinite();
    Ok((q_hat, q_hat * q_hat / chi2_q, chi2_q, vacuous))
}

pub fn calibrate(predictor: &dyn Predictor, records: &[TransitionRecord], alpha: f64, kind: ScoreKind) -> Result<CalibrationResult> {
    if records.is_empty() {
        return Err(Error::Empty("calibration dataset is empty"));
    }
    let scores = calibration_scores(predictor, records, kind)?;
    let (q_hat, zeta, chi2_q, vacuous) = calibrate_scores(&scores, alpha)?;
    Ok(CalibrationResult {
        alpha,
        n_cal: records.len(),
        q_hat,
        zeta,
        score_kind: kind,
        chi2_q,
        vacuous,
        predictor: predictor.name().to_string(),
        predictor_fingerprint: predictor.fingerprint(),
        dataset_fingerprint: dataset_fingerprint(records),
    })
}

/// Closed membership test `score <= q_hat`.
pub fn contains(query: &Pose, pred: &GaussianPrediction, cal: &CalibrationResult) -> Result<bool> {
    if cal.vacuous {
        // still reject mismatched predictions
        residual(cal.score_kind, &pred.pose, pred)?;
        return Ok(true);
    }
    Ok(score(cal.score_kind, query, pred)? <= cal.q_hat)
}

pub fn contains_batch(queries: &[Pose], pred: &GaussianPrediction, cal: &CalibrationResult) -> Result<Vec<bool>> {
    queries.iter().map(|q| contains(q, pred, cal)).collect()
}

/// Membership as a chi-square test on the covariance scaled by `zeta`.
pub fn contains_scaled(query: &Pose, pred: &GaussianPrediction, cal: &CalibrationResult) -> Result<bool> {
    if cal.score_kind != ScoreKind::ClapsMahalanobisLie {
        return Err(Error::KindMismatch("the scaled-covariance test applies to the Lie Mahalanobis score".into()));
    }
    if cal.vacuous {
        return Ok(true);
    }
    let e = residual(cal.score_kind, query, pred)?;
    if cal.zeta == 0.0 {
        return Ok(e == Vector3::zeros());
    }
    let r = mahalanobis(&e, &(pred.cov * cal.zeta))?;
    Ok(r * r <= cal.chi2_q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se2::Twist;
    use proptest::prelude::*;

    fn gaussian(cov: Matrix3<f64>, frame: Frame) -> GaussianPrediction {
        GaussianPrediction { pose: Pose::new(0.3, -0.2, 0.4), twist: Twist::zero(), cov, frame }
    }

    fn at_error(pred: &GaussianPrediction, e: &Vector3<f64>) -> Pose {
        pred.pose.compose(&se2::exp(e))
    }

    /// chi-square(3) CDF written with erf, erf by its Taylor series.
    fn chi2_3_cdf_oracle(x: f64) -> f64 {
        let z = (x / 2.0).sqrt();
        let mut term = z;
        let mut sum = z;
        for n in 1..200 {
            term *= -z * z / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        let erf = 2.0 / std::f64::consts::PI.sqrt() * sum;
        erf - (2.0 * x / std::f64::consts::PI).sqrt() * (-x / 2.0).exp()
    }

    fn oracle_quantile_3(alpha: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if chi2_3_cdf_oracle(mid) < 1.0 - alpha {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn chi2_pinned_values() {
        let oracle = oracle_quantile_3(0.1);
        assert!((oracle - 6.251_388_631_170_325).abs() < 1e-9);
        let q = chi2_quantile(0.1, 3).unwrap();
        assert!((q - oracle).abs() < 1e-6);
        assert!((chi2_cdf(q, 3) - 0.9).abs() < 1e-10);
        assert!((chi2_quantile(0.5, 2).unwrap() - 2.0 * std::f64::consts::LN_2).abs() < 1e-10);
    }

    #[test]
    fn chi2_agrees_with_statrs_distribution() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        for d in 1..8 {
            let dist = ChiSquared::new(d as f64).unwrap();
            for alpha in [0.01, 0.05, 0.1, 0.3, 0.5, 0.9] {
                let ours = chi2_quantile(alpha, d).unwrap();
                assert!((dist.cdf(ours) - (1.0 - alpha)).abs() < 1e-10, "d={d} alpha={alpha}");
            }
        }
    }

    #[test]
    fn chi2_monotone() {
        let mut prev = f64::INFINITY;
        for a in [0.01, 0.05, 0.1, 0.2, 0.5, 0.8] {
            let q = chi2_quantile(a, 3).unwrap();
            assert!(q < prev);
            prev = q;
        }
        for d in 1..10 {
            assert!(chi2_quantile(0.1, d).unwrap() < chi2_quantile(0.1, d + 1).unwrap());
        }
        assert!(chi2_quantile(0.0, 3).is_err() && chi2_quantile(0.1, 0).is_err());
    }

    #[test]
    fn split_quantile_examples() {
        let scores: Vec<f64> = (1..=19).map(f64::from).collect();
        assert_eq!(quantile_rank(19, 0.1), 18);
        assert_eq!(split_quantile(&scores, 0.1).unwrap(), 18.0);
        assert_eq!(split_quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.1).unwrap(), f64::INFINITY);
        assert_eq!(split_quantile(&[0.7; 40], 0.1).unwrap(), 0.7);
        assert!(split_quantile(&[], 0.1).is_err());
        assert!(split_quantile(&[1.0, f64::NAN], 0.1).is_err());
    }

    #[test]
    fn score_examples() {
        let pred = gaussian(Matrix3::identity(), Frame::ExpCoordsLeft);
        let truth = at_error(&pred, &Vector3::new(0.3, 0.4, 0.0));
        assert!((score(ScoreKind::ClapsMahalanobisLie, &truth, &pred).unwrap() - 0.5).abs() < 1e-14);
        let e = Vector3::new(3.0, 4.0, 0.0);
        assert!((mahalanobis(&e, &Matrix3::identity()).unwrap() - 5.0).abs() < 1e-14);
        let d = Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0));
        assert!((mahalanobis(&Vector3::new(2.0, 0.0, 0.0), &d).unwrap() - 1.0).abs() < 1e-15);
        for kind in ScoreKind::ALL {
            let p = gaussian(Matrix3::identity(), kind.frame());
            assert_eq!(score(kind, &p.pose, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn ss_scores_wrap_heading() {
        let mut pred = gaussian(Matrix3::identity(), Frame::Generalized);
        pred.pose = Pose::new(0.0, 0.0, 3.1);
        let truth = Pose::new(0.0, 0.0, -3.1);
        let s = score(ScoreKind::L2SS, &truth, &pred).unwrap();
        assert!((s - (2.0 * std::f64::consts::PI - 6.2)).abs() < 1e-12);
    }

    #[test]
    fn frame_mismatch_and_domain_errors() {
        let lie = gaussian(Matrix3::identity(), Frame::ExpCoordsLeft);
        assert!(matches!(score(ScoreKind::MahalanobisSS, &lie.pose, &lie), Err(Error::KindMismatch(_))));
        let flipped = lie.pose.compose(&Pose::new(0.0, 0.0, -std::f64::consts::PI));
        assert!(matches!(score(ScoreKind::ClapsMahalanobisLie, &flipped, &lie), Err(Error::Domain(_))));
    }

    fn cal_with(q_hat: f64, kind: ScoreKind) -> CalibrationResult {
        let chi2_q = chi2_quantile(0.1, 3).unwrap();
        CalibrationResult {
            alpha: 0.1,
            n_cal: 100,
            q_hat,
            zeta: q_hat * q_hat / chi2_q,
            score_kind: kind,
            chi2_q,
            vacuous: q_hat.is_infinite(),
            predictor: "test".into(),
            predictor_fingerprint: String::new(),
            dataset_fingerprint: String::new(),
        }
    }

    #[test]
    fn zeta_from_pinned_chi2() {
        let (q, zeta, _, vacuous) = calibrate_scores(&(0..100).map(|_| 2.5).collect::<Vec<_>>(), 0.1).unwrap();
        assert_eq!(q, 2.5);
        assert!((zeta - 6.25 / 6.251_388_631_170_325).abs() < 1e-9);
        assert!(!vacuous);
        let (q, zeta, _, _) = calibrate_scores(&[0.0; 30], 0.1).unwrap();
        assert_eq!((q, zeta), (0.0, 0.0));
        let (_, _, _, vacuous) = calibrate_scores(&[1.0; 5], 0.1).unwrap();
        assert!(vacuous);
    }

    #[test]
    fn region_is_closed_at_the_quantile() {
        let pred = gaussian(Matrix3::from_diagonal(&Vector3::new(0.01, 0.02, 0.05)), Frame::ExpCoordsLeft);
        let e = Vector3::new(0.05, -0.02, 0.1);
        let truth = at_error(&pred, &e);
        let s = score(ScoreKind::ClapsMahalanobisLie, &truth, &pred).unwrap();
        let cal = cal_with(s, ScoreKind::ClapsMahalanobisLie);
        assert!(contains(&truth, &pred, &cal).unwrap());
        assert!(contains(&pred.pose, &pred, &cal).unwrap());
        assert!(contains(&pred.pose, &pred, &cal_with(0.0, ScoreKind::ClapsMahalanobisLie)).unwrap());
        let vac = cal_with(f64::INFINITY, ScoreKind::ClapsMahalanobisLie);
        assert!(contains(&pred.pose.compose(&Pose::new(50.0, 0.0, 3.0)), &pred, &vac).unwrap());
    }

    #[test]
    fn calibration_json_round_trip() {
        let cal = cal_with(1.7, ScoreKind::L2Lie);
        assert_eq!(CalibrationResult::from_json(&cal.to_json().unwrap()).unwrap(), cal);
        let vac = cal_with(f64::INFINITY, ScoreKind::L2SS);
        let back = CalibrationResult::from_json(&vac.to_json().unwrap()).unwrap();
        assert!(back.q_hat.is_infinite() && back.vacuous);
    }

    #[test]
    fn scaled_gaussian_test_agrees_on_random_queries() {
        use rand::{Rng, SeedableRng};
        let cov = Matrix3::new(0.004, 0.001, -0.0005, 0.001, 0.002, 0.0008, -0.0005, 0.0008, 0.03);
        let pred = gaussian(cov, Frame::ExpCoordsLeft);
        let cal = cal_with(2.1, ScoreKind::ClapsMahalanobisLie);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut inside = 0;
        for _ in 0..100_000 {
            let e = Vector3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.6..0.6));
            let q = at_error(&pred, &e);
            let a = contains(&q, &pred, &cal).unwrap();
            let b = contains_scaled(&q, &pred, &cal).unwrap();
            let s = score(ScoreKind::ClapsMahalanobisLie, &q, &pred).unwrap();
            // verdicts may only differ on points within roundoff of the boundary
            assert!(a == b || (s - cal.q_hat).abs() < 1e-12);
            inside += a as usize;
        }
        assert!(inside > 1000 && inside < 99_000);
    }

    proptest! {
        #[test]
        fn covariance_scaling_divides_scores(c in 0.01f64..100.0, x in -0.3f64..0.3, y in -0.3f64..0.3, t in -1.0f64..1.0) {
            let cov = Matrix3::new(0.02, 0.003, 0.0, 0.003, 0.01, 0.002, 0.0, 0.002, 0.1);
            let a = gaussian(cov, Frame::ExpCoordsLeft);
            let b = gaussian(cov * c, Frame::ExpCoordsLeft);
            let q = at_error(&a, &Vector3::new(x, y, t));
            let sa = score(ScoreKind::ClapsMahalanobisLie, &q, &a).unwrap();
            let sb = score(ScoreKind::ClapsMahalanobisLie, &q, &b).unwrap();
            prop_assert!((sb - sa / c.sqrt()).abs() <= 1e-10 * sa.max(1.0));
        }

        #[test]
        fn quantile_is_permutation_invariant_and_monotone(mut v in proptest::collection::vec(0.0f64..10.0, 1..80), seed in 0u64..1000) {
            let q1 = split_quantile(&v, 0.1).unwrap();
            let n = v.len();
            for i in 0..n {
                let j = ((seed as usize).wrapping_mul(31).wrapping_add(i * 17)) % n;
                v.swap(i, j);
            }
            prop_assert_eq!(split_quantile(&v, 0.1).unwrap(), q1);
            prop_assert!(split_quantile(&v, 0.05).unwrap() >= split_quantile(&v, 0.2).unwrap());
        }
    }
}
