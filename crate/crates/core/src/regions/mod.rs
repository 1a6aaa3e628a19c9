//! Prediction-region geometry: boundary sampling, the push-forward of the
//! algebra ellipsoid into configuration space, closed meshes, volumes and
//! planar footprints.
//!
//! Mesh connectivity comes from the convex hull of the unit-sphere samples.
//! Every region here is a linear image of that sphere in algebra (or
//! generalized) coordinates, followed by a continuous bijection into
//! configuration space, so the sphere's triangulation stays closed and
//! consistently oriented after mapping.

mod footprint;
mod hull;

pub use footprint::{iou, Footprint};
pub use hull::convex_hull;

use std::io::Write;

use nalgebra::{Matrix3, Unit, UnitQuaternion, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::conformal::{self, CalibrationResult, ScoreKind};
use crate::error::{Error, Result};
use crate::estimate::{Frame, GaussianPrediction};
use crate::fingerprint::fingerprint;
use crate::se2::{self, AlgebraVector, GeneralizedConfig, Pose};
use crate::simulate::rng_from_seed;

/// Clipping margin inside `|theta| < pi`.
pub const CLIP_MARGIN: f64 = 1e-6;

/// Default footprint cell size, metres.
pub const DEFAULT_RESOLUTION: f64 = 0.005;

/// `n` points of a Fibonacci lattice on the unit sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let (s, c) = (golden * i as f64).sin_cos();
            Vector3::new(r * c, r * s, z)
        })
        .collect()
}

/// Unit-sphere samples with their hull triangulation. Reusable across
/// predictions with the same sample count and seed.
#[derive(Debug, Clone)]
pub struct SphereLattice {
    pub points: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    pub seed: Option<u64>,
}

impl SphereLattice {
    /// A seed applies a random rigid rotation to the lattice.
    pub fn new(n: usize, seed: Option<u64>) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidArgument(format!("need at least 4 boundary samples, got {n}")));
        }
        let mut points = fibonacci_sphere(n);
        if let Some(s) = seed {
            let mut rng = rng_from_seed(s);
            let axis = loop {
                let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                if v.norm() > 1e-3 && v.norm() <= 1.0 {
                    break v;
                }
            };
            let rot = UnitQuaternion::from_axis_angle(&Unit::new_normalize(axis), rng.random_range(0.0..std::f64::consts::TAU));
            for p in points.iter_mut() {
                *p = rot * *p;
            }
        }
        let triangles = convex_hull(&points)?;
        Ok(Self { points, triangles, seed })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Symmetric square root through an eigendecomposition.
pub fn sqrt_spd(m: &Matrix3<f64>) -> Matrix3<f64> {
    let eig = ((m + m.transpose()) * 0.5).symmetric_eigen();
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    eig.eigenvectors * Matrix3::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Linear map taking the unit sphere onto the region boundary.
fn boundary_shape(pred: &GaussianPrediction, cal: &CalibrationResult) -> Result<Matrix3<f64>> {
    if cal.vacuous || !cal.q_hat.is_finite() {
        return Err(Error::Vacuous);
    }
    if pred.frame != cal.score_kind.frame() {
        return Err(Error::KindMismatch(format!("{} calibration applied to a {:?} prediction", cal.score_kind, pred.frame)));
    }
    Ok(if cal.score_kind.uses_covariance() {
        sqrt_spd(&pred.cov) * cal.q_hat
    } else {
        Matrix3::identity() * cal.q_hat
    })
}

/// Boundary samples and whether each was pulled inside the log domain.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySet {
    pub points: Vec<AlgebraVector>,
    pub clipped: Vec<bool>,
}

fn clip(e: AlgebraVector) -> (AlgebraVector, bool) {
    let limit = std::f64::consts::PI - CLIP_MARGIN;
    if e.z.abs() >= limit {
        (e * (limit / e.z.abs()), true)
    } else {
        (e, false)
    }
}

fn offsets(lattice: &SphereLattice, pred: &GaussianPrediction, cal: &CalibrationResult) -> Result<BoundarySet> {
    let shape = boundary_shape(pred, cal)?;
    let lie = pred.frame == Frame::ExpCoordsLeft;
    let (points, clipped) = lattice
        .points
        .iter()
        .map(|s| {
            let e = shape * s;
            if lie {
                clip(e)
            } else {
                (e, false)
            }
        })
        .unzip();
    Ok(BoundarySet { points, clipped })
}

/// Algebra-space boundary of a Lie-group region, clipped radially to
/// `|theta| <= pi - CLIP_MARGIN`.
pub fn boundary_points(pred: &GaussianPrediction, cal: &CalibrationResult, n: usize, seed: Option<u64>) -> Result<BoundarySet> {
    if cal.score_kind.frame() != Frame::ExpCoordsLeft {
        return Err(Error::KindMismatch(format!("{} regions have no algebra boundary", cal.score_kind)));
    }
    if n < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 boundary samples, got {n}")));
    }
    let mut points = fibonacci_sphere(n);
    if seed.is_some() {
        points = SphereLattice::new(n, seed)?.points;
    }
    let lattice = SphereLattice { points, triangles: Vec::new(), seed };
    offsets(&lattice, pred, cal)
}

/// Configuration of `pred.pose * exp(e)`, with the heading continued from the
/// predicted heading instead of wrapped.
pub fn map_point(e: &AlgebraVector, pred: &GaussianPrediction) -> Result<GeneralizedConfig> {
    match pred.frame {
        Frame::ExpCoordsLeft => {
            if !se2::in_diffeomorphic_domain(e) {
                return Err(Error::Domain(e.z));
            }
            let g = pred.pose.compose(&se2::exp(e));
            Ok(GeneralizedConfig { x: g.x, y: g.y, theta: pred.pose.theta + e.z })
        }
        Frame::Generalized => Ok(GeneralizedConfig {
            x: pred.pose.x + e.x,
            y: pred.pose.y + e.y,
            theta: pred.pose.theta + e.z,
        }),
    }
}

pub fn map_to_cspace(points: &[AlgebraVector], pred: &GaussianPrediction) -> Result<Vec<GeneralizedConfig>> {
    points.iter().map(|e| map_point(e, pred)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshSource {
    pub prediction_fingerprint: String,
    pub calibration_fingerprint: String,
    pub n_samples: usize,
}

/// Closed triangulated boundary of a region in `(x, y, theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMesh {
    pub vertices: Vec<GeneralizedConfig>,
    pub triangles: Vec<[usize; 3]>,
    pub clipped: Vec<bool>,
    /// m^2 rad.
    pub volume: f64,
    pub source: MeshSource,
}

/// Enclosed volume of an outward-oriented closed mesh.
pub fn mesh_volume(vertices: &[Vector3<f64>], triangles: &[[usize; 3]]) -> f64 {
    if vertices.is_empty() {
        return 0.0;
    }
    let c = vertices.iter().fold(Vector3::zeros(), |a, v| a + v) / vertices.len() as f64;
    let v: f64 = triangles
        .iter()
        .map(|t| (vertices[t[0]] - c).dot(&(vertices[t[1]] - c).cross(&(vertices[t[2]] - c))))
        .sum();
    (v / 6.0).abs()
}

impl RegionMesh {
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        let used: std::collections::HashSet<usize> = self.triangles.iter().flatten().copied().collect();
        used.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    /// Every directed edge appears once and its reverse once.
    pub fn is_closed(&self) -> bool {
        let mut directed = std::collections::HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_insert(0usize) += 1;
            }
        }
        directed.iter().all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// Generalized winding number of `q` (1 inside, 0 outside for a closed,
    /// outward-oriented mesh), from the summed solid angles of the triangles.
    pub fn winding_number(&self, q: &Vector3<f64>) -> f64 {
        let omega: f64 = self
            .triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i].as_vector() - q);
                let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
                let det = a.dot(&b.cross(&c));
                let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
                2.0 * det.atan2(den)
            })
            .sum();
        omega / (4.0 * std::f64::consts::PI)
    }

    /// Mesh membership of a pose. The heading is taken on the branch nearest
    /// the mean vertex heading, since mesh headings are unwrapped.
    pub fn contains(&self, pose: &Pose) -> bool {
        if self.vertices.is_empty() {
            return false;
        }
        let mean = self.vertices.iter().map(|v| v.theta).sum::<f64>() / self.vertices.len() as f64;
        let theta = mean + se2::wrap_angle(pose.theta - mean);
        self.winding_number(&Vector3::new(pose.x, pose.y, theta)) > 0.5
    }

    pub fn write_vertices_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y,theta,clipped")?;
        for (q, c) in self.vertices.iter().zip(&self.clipped) {
            writeln!(out, "{},{},{},{}", q.x, q.y, q.theta, *c as u8)?;
        }
        Ok(())
    }

    pub fn write_triangles_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "a,b,c")?;
        for t in &self.triangles {
            writeln!(out, "{},{},{}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

/// Mesh of a calibrated region on a prepared lattice.
pub fn reconstruct_mesh_on(lattice: &SphereLattice, pred: &GaussianPrediction, cal: &CalibrationResult) -> Result<RegionMesh> {
    let set = offsets(lattice, pred, cal)?;
    let vertices = map_to_cspace(&set.points, pred)?;
    let coords: Vec<Vector3<f64>> = vertices.iter().map(|q| q.as_vector()).collect();
    let volume = mesh_volume(&coords, &lattice.triangles);
    Ok(RegionMesh {
        vertices,
        triangles: lattice.triangles.clone(),
        clipped: set.clipped,
        volume,
        source: MeshSource {
            prediction_fingerprint: fingerprint(pred),
            calibration_fingerprint: fingerprint(cal),
            n_samples: lattice.len(),
        },
    })
}

pub fn reconstruct_mesh(pred: &GaussianPrediction, cal: &CalibrationResult, n: usize, seed: Option<u64>) -> Result<RegionMesh> {
    reconstruct_mesh_on(&SphereLattice::new(n, seed)?, pred, cal)
}

/// Fraction of particles inside the region (membership test, not the mesh).
pub fn empirical_coverage(particles: &[Pose], pred: &GaussianPrediction, cal: &CalibrationResult) -> Result<f64> {
    if particles.is_empty() {
        return Err(Error::Empty("no particles"));
    }
    let hits = particles
        .par_iter()
        .map(|p| conformal::contains(p, pred, cal).map(|b| b as usize))
        .sum::<Result<usize>>()?;
    Ok(hits as f64 / particles.len() as f64)
}

/// Fraction of particles inside the reconstructed mesh.
pub fn mesh_coverage(particles: &[Pose], mesh: &RegionMesh) -> Result<f64> {
    if particles.is_empty() {
        return Err(Error::Empty("no particles"));
    }
    let hits = particles.par_iter().filter(|p| mesh.contains(p)).count();
    Ok(hits as f64 / particles.len() as f64)
}

/// Membership of `e` decided three ways: in the algebra, on the group after
/// `exp`, and in configuration space after the full map.
pub fn membership_chain(e: &AlgebraVector, pred: &GaussianPrediction, cal: &CalibrationResult) -> Result<[bool; 3]> {
    if cal.score_kind.frame() != Frame::ExpCoordsLeft {
        return Err(Error::KindMismatch("membership chain applies to Lie-group scores".into()));
    }
    let algebra = if cal.vacuous {
        true
    } else if cal.score_kind == ScoreKind::ClapsMahalanobisLie {
        conformal::mahalanobis(e, &pred.cov)? <= cal.q_hat
    } else {
        e.norm() <= cal.q_hat
    };
    let group = conformal::contains(&pred.pose.compose(&se2::exp(e)), pred, cal)?;
    let q = map_point(e, pred)?;
    let cspace = conformal::contains(&se2::kinematics_map(&q), pred, cal)?;
    Ok([algebra, group, cspace])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::chi2_quantile;
    use crate::se2::Twist;

    fn pred(cov: Matrix3<f64>, pose: Pose) -> GaussianPrediction {
        GaussianPrediction { pose, twist: Twist::zero(), cov, frame: Frame::ExpCoordsLeft }
    }

    fn cal(q_hat: f64, kind: ScoreKind) -> CalibrationResult {
        let chi2_q = chi2_quantile(0.1, 3).unwrap();
        CalibrationResult {
            alpha: 0.1,
            n_cal: 100,
            q_hat,
            zeta: q_hat * q_hat / chi2_q,
            score_kind: kind,
            chi2_q,
            vacuous: !q_hat.is_finite(),
            predictor: "test".into(),
            predictor_fingerprint: String::new(),
            dataset_fingerprint: String::new(),
        }
    }

    fn typical() -> GaussianPrediction {
        let cov = Matrix3::new(4e-4, 1e-4, 2e-4, 1e-4, 3e-4, 5e-4, 2e-4, 5e-4, 0.02);
        pred(cov, Pose::new(0.2, 0.05, 0.3))
    }

    #[test]
    fn unit_radius_gives_unit_sphere() {
        let p = pred(Matrix3::identity(), Pose::identity());
        let set = boundary_points(&p, &cal(1.0, ScoreKind::ClapsMahalanobisLie), 200, None).unwrap();
        assert!(set.points.iter().all(|e| (e.norm() - 1.0).abs() < 1e-12));
        assert!(set.clipped.iter().all(|c| !c));
        let zero = boundary_points(&p, &cal(0.0, ScoreKind::ClapsMahalanobisLie), 50, None).unwrap();
        assert!(zero.points.iter().all(|e| *e == Vector3::zeros()));
    }

    #[test]
    fn boundary_points_score_exactly_q_hat() {
        let p = typical();
        let c = cal(2.3, ScoreKind::ClapsMahalanobisLie);
        let set = boundary_points(&p, &c, 5000, Some(3)).unwrap();
        for (e, clipped) in set.points.iter().zip(&set.clipped) {
            assert!(!clipped);
            let s = conformal::score(ScoreKind::ClapsMahalanobisLie, &p.pose.compose(&se2::exp(e)), &p).unwrap();
            assert!((s - c.q_hat).abs() < 1e-9, "{s}");
        }
    }

    #[test]
    fn wide_heading_is_clipped() {
        let p = pred(Matrix3::from_diagonal(&Vector3::new(0.01, 0.01, 4.0)), Pose::identity());
        let set = boundary_points(&p, &cal(2.0, ScoreKind::ClapsMahalanobisLie), 500, None).unwrap();
        assert!(set.clipped.iter().any(|c| *c));
        assert!(set.points.iter().all(se2::in_diffeomorphic_domain));
        let mesh = reconstruct_mesh(&p, &cal(2.0, ScoreKind::ClapsMahalanobisLie), 500, None).unwrap();
        assert!(mesh.is_closed() && mesh.volume > 0.0);
        assert!(mesh.vertices.iter().all(|q| q.theta.abs() < std::f64::consts::PI));
    }

    #[test]
    fn errors() {
        let p = typical();
        assert!(matches!(boundary_points(&p, &cal(f64::INFINITY, ScoreKind::ClapsMahalanobisLie), 100, None), Err(Error::Vacuous)));
        assert!(boundary_points(&p, &cal(1.0, ScoreKind::MahalanobisSS), 100, None).is_err());
        assert!(boundary_points(&p, &cal(1.0, ScoreKind::ClapsMahalanobisLie), 3, None).is_err());
        assert!(map_point(&Vector3::new(0.0, 0.0, 4.0), &p).is_err());
    }

    #[test]
    fn map_examples() {
        let p = typical();
        let q = map_point(&Vector3::zeros(), &p).unwrap();
        assert_eq!(q, se2::kinematics_inv(&p.pose));
        let id = pred(Matrix3::identity(), Pose::identity());
        let e = Vector3::new(0.1, -0.2, 0.7);
        let q = map_point(&e, &id).unwrap();
        assert_eq!(q, se2::kinematics_inv(&se2::exp(&e)));
    }

    #[test]
    fn small_ellipsoid_volume_matches_closed_form() {
        let d = Vector3::new(1e-4, 4e-4, 9e-4);
        let p = pred(Matrix3::from_diagonal(&d), Pose::identity());
        let c = cal(1.5, ScoreKind::ClapsMahalanobisLie);
        let mesh = reconstruct_mesh(&p, &c, 5000, None).unwrap();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * c.q_hat.powi(3) * (d.x * d.y * d.z).sqrt();
        assert!((mesh.volume - exact).abs() / exact < 0.02, "{} vs {exact}", mesh.volume);
        assert_eq!(mesh.euler_characteristic(), 2);
        assert!(mesh.is_closed());
    }

    #[test]
    fn volume_is_stable_in_sample_count() {
        let p = typical();
        let c = cal(2.0, ScoreKind::ClapsMahalanobisLie);
        let vols: Vec<f64> = [500, 1000, 2000, 5000]
            .iter()
            .map(|&n| reconstruct_mesh(&p, &c, n, None).unwrap().volume)
            .collect();
        assert!((vols[0] - vols[3]).abs() / vols[3] < 0.05);
        let steps: Vec<f64> = vols.windows(2).map(|w| (w[1] - w[0]).abs() / w[0]).collect();
        assert!(steps.windows(2).all(|s| s[1] < s[0]), "{steps:?}");
    }

    #[test]
    fn nested_alphas_give_nested_volumes() {
        let p = typical();
        let big = reconstruct_mesh(&p, &cal(2.5, ScoreKind::ClapsMahalanobisLie), 800, None).unwrap();
        let small = reconstruct_mesh(&p, &cal(1.8, ScoreKind::ClapsMahalanobisLie), 800, None).unwrap();
        assert!(small.volume <= big.volume);
    }

    #[test]
    fn membership_chain_agrees() {
        let p = typical();
        let c = cal(2.0, ScoreKind::ClapsMahalanobisLie);
        let mut rng = rng_from_seed(5);
        for _ in 0..10_000 {
            let e = Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.5..0.5));
            let [a, g, q] = membership_chain(&e, &p, &c).unwrap();
            assert!(a == g && g == q);
        }
    }

    #[test]
    fn mesh_membership_matches_the_score_away_from_the_boundary() {
        let p = typical();
        let c = cal(2.0, ScoreKind::ClapsMahalanobisLie);
        let mesh = reconstruct_mesh(&p, &c, 3000, None).unwrap();
        let l = p.cov.cholesky().unwrap().l();
        let mut rng = rng_from_seed(9);
        let mut checked = 0;
        for _ in 0..2000 {
            let z: Vector3<f64> = Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            // skip a shell around the boundary where the polyhedron and the
            // smooth surface may disagree
            if (z.norm() - 2.0).abs() < 0.05 {
                continue;
            }
            let g = p.pose.compose(&se2::exp(&(l * z)));
            assert_eq!(mesh.contains(&g), conformal::contains(&g, &p, &c).unwrap(), "{z:?}");
            checked += 1;
        }
        assert!(checked > 1800);
        assert!((mesh.winding_number(&Vector3::new(p.pose.x, p.pose.y, p.pose.theta)) - 1.0).abs() < 1e-9);
        let far = Pose::new(5.0, 5.0, 0.0);
        assert!(mesh.winding_number(&Vector3::new(far.x, far.y, far.theta)).abs() < 1e-9);
        assert_eq!(mesh_coverage(&[p.pose, far], &mesh).unwrap(), 0.5);
    }

    #[test]
    fn mesh_membership_follows_heading_branches() {
        let mut p = typical();
        p.pose = Pose::new(0.0, 0.0, 3.1);
        let c = cal(2.0, ScoreKind::ClapsMahalanobisLie);
        let mesh = reconstruct_mesh(&p, &c, 2000, None).unwrap();
        // 3.1 + 0.1 wraps to a negative heading
        let g = p.pose.compose(&Pose::new(0.0, 0.0, 0.1));
        assert!(g.theta < 0.0);
        assert!(mesh.contains(&g));
    }

    #[test]
    fn coverage_edge_cases() {
        let p = typical();
        let ps = vec![p.pose; 10];
        assert_eq!(empirical_coverage(&ps, &p, &cal(0.5, ScoreKind::ClapsMahalanobisLie)).unwrap(), 1.0);
        let far = vec![p.pose.compose(&Pose::new(10.0, 0.0, 0.0)); 5];
        assert_eq!(empirical_coverage(&far, &p, &cal(f64::INFINITY, ScoreKind::ClapsMahalanobisLie)).unwrap(), 1.0);
        assert_eq!(empirical_coverage(&far, &p, &cal(0.5, ScoreKind::ClapsMahalanobisLie)).unwrap(), 0.0);
        assert!(empirical_coverage(&[], &p, &cal(0.5, ScoreKind::ClapsMahalanobisLie)).is_err());
    }

    #[test]
    fn ss_regions_are_plain_ellipsoids() {
        let cov = Matrix3::from_diagonal(&Vector3::new(1e-3, 2e-3, 0.05));
        let mut p = pred(cov, Pose::new(0.1, 0.2, 3.0));
        p.frame = Frame::Generalized;
        let c = cal(2.0, ScoreKind::MahalanobisSS);
        let mesh = reconstruct_mesh(&p, &c, 5000, None).unwrap();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 8.0 * (1e-3f64 * 2e-3 * 0.05).sqrt();
        // inscribed polyhedron: slightly below the ellipsoid
        assert!(mesh.volume < exact && (exact - mesh.volume) / exact < 0.01, "{} vs {exact}", mesh.volume);
        // the heading is not wrapped across the seam
        assert!(mesh.vertices.iter().any(|q| q.theta > std::f64::consts::PI));
    }

    #[test]
    fn footprint_of_mesh_contains_projected_particles() {
        let p = typical();
        let c = cal(2.0, ScoreKind::ClapsMahalanobisLie);
        let mesh = reconstruct_mesh(&p, &c, 1000, None).unwrap();
        let fp = Footprint::from_mesh(&mesh, DEFAULT_RESOLUTION).unwrap();
        assert!(!fp.is_empty());
        let mut rng = rng_from_seed(9);
        for _ in 0..2000 {
            let e = Vector3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.3..0.3));
            if conformal::mahalanobis(&e, &p.cov).unwrap() <= 0.9 * c.q_hat {
                let g = p.pose.compose(&se2::exp(&e));
                let (i, j) = fp.cell_of(&g.translation());
                assert!(fp.contains_cell(i, j));
            }
        }
        let mut v = Vec::new();
        mesh.write_vertices_csv(&mut v).unwrap();
        assert_eq!(String::from_utf8(v).unwrap().lines().count(), 1001);
    }
}
