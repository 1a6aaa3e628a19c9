use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Base, DatasetSpec, ExperimentConfig, MethodId};
use crate::conformal::{self, dataset_fingerprint, CalibrationResult};
use crate::error::{Error, Result};
use crate::estimate::{FitKind, FittedInEkf, GaussianPrediction, InEkf, Predictor, SsEkf};
use crate::regions::{self, iou, Footprint, SphereLattice};
use crate::simulate::{gen_box_dataset, gen_grid_dataset, mc_particles, stream_seed, TransitionRecord, World};

pub const STREAM_CALIBRATION: &str = "calibration";
pub const STREAM_TEST: &str = "test";
pub const STREAM_VALIDATION: &str = "validation";
pub const STREAM_TRIAL: &str = "trial";

#[derive(Debug, Clone, PartialEq)]
pub struct Datasets {
    pub calibration: Vec<TransitionRecord>,
    pub test: Vec<TransitionRecord>,
    pub validation: Vec<TransitionRecord>,
}

fn generate_one(spec: &DatasetSpec, world: &World, cfg: &ExperimentConfig, stream: &str) -> Result<Vec<TransitionRecord>> {
    match spec.box_samples {
        Some(n) => gen_box_dataset(&spec.grid, world, &cfg.model_inertia(), n, stream),
        None => gen_grid_dataset(&spec.grid, world, &cfg.model_inertia(), stream),
    }
}

pub fn world_of(cfg: &ExperimentConfig) -> Result<World> {
    World::new(cfg.resolved().world)
}

pub fn generate(cfg: &ExperimentConfig) -> Result<Datasets> {
    cfg.validate()?;
    let world = world_of(cfg)?;
    Ok(Datasets {
        calibration: generate_one(&cfg.calibration, &world, cfg, STREAM_CALIBRATION)?,
        test: generate_one(&cfg.test, &world, cfg, STREAM_TEST)?,
        validation: generate_one(&cfg.validation, &world, cfg, STREAM_VALIDATION)?,
    })
}

/// Predictor behind `base`; the fitted variants are fit on `calibration`.
pub fn build_predictor(cfg: &ExperimentConfig, base: Base, calibration: &[TransitionRecord]) -> Result<Box<dyn Predictor>> {
    let pc = cfg.predictor_config();
    Ok(match base {
        Base::SsEkf => Box::new(SsEkf::new(pc)),
        Base::InEkf => Box::new(InEkf::new(pc)),
        Base::InEkf2M => Box::new(FittedInEkf::fit(InEkf::new(pc), FitKind::SecondMoment, calibration)?),
        Base::InEkfMle => Box::new(FittedInEkf::fit(InEkf::new(pc), FitKind::Mle, calibration)?),
    })
}

/// Region of one method: split-conformal for the CP methods, the predictor's
/// own Gaussian ellipsoid otherwise.
pub fn calibrate_method(cfg: &ExperimentConfig, method: MethodId, predictor: &dyn Predictor, calibration: &[TransitionRecord]) -> Result<CalibrationResult> {
    if method.is_conformal() {
        conformal::calibrate(predictor, calibration, cfg.alpha, method.score_kind())
    } else {
        let mut cal = CalibrationResult::uncalibrated(predictor, method.score_kind(), cfg.alpha)?;
        if matches!(method.base(), Base::InEkf2M | Base::InEkfMle) {
            cal.dataset_fingerprint = dataset_fingerprint(calibration);
        }
        Ok(cal)
    }
}

/// A method ready to evaluate.
pub struct Prepared {
    pub method: MethodId,
    pub predictor: Box<dyn Predictor>,
    pub cal: CalibrationResult,
}

/// Rebuilds each method's predictor and pairs it with its calibration,
/// checking that the calibration was produced for this predictor.
pub fn prepare(cfg: &ExperimentConfig, calibration: &[TransitionRecord], cals: &BTreeMap<MethodId, CalibrationResult>) -> Result<Vec<Prepared>> {
    cfg.methods
        .iter()
        .map(|&method| {
            let cal = cals.get(&method).ok_or_else(|| Error::Missing(format!("no calibration for method {method}")))?.clone();
            let predictor = build_predictor(cfg, method.base(), calibration)?;
            if cal.predictor_fingerprint != predictor.fingerprint() {
                return Err(Error::Schema(format!("calibration for {method} was produced by a different predictor")));
            }
            if cal.score_kind != method.score_kind() {
                return Err(Error::Schema(format!("calibration for {method} uses score {}", cal.score_kind)));
            }
            Ok(Prepared { method, predictor, cal })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub method: String,
    pub coverage: f64,
    /// m^2 rad; infinite for vacuous regions.
    pub volume: f64,
    /// Workspace IoU with the particle footprint; NaN for vacuous regions.
    pub iou: f64,
    pub clipped_vertices: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodMetrics {
    pub method: String,
    pub conformal: bool,
    pub vacuous: bool,
    pub q_hat: f64,
    pub n_trials: usize,
    /// Mean over trials of the particle coverage.
    pub coverage_trial_mean: f64,
    /// Fraction of held-out transitions inside their region.
    pub coverage_transition: f64,
    pub n_test: usize,
    pub mean_volume: f64,
    /// Mean over trials of `volume / volume(CLAPS)`.
    pub volume_ratio: f64,
    pub mean_iou: f64,
    /// Trials in which CLAPS has the strictly smaller volume.
    pub claps_volume_wins: usize,
    /// Trials in which CLAPS has the strictly larger IoU.
    pub claps_iou_wins: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub methods: Vec<MethodMetrics>,
    pub trials: Vec<TrialRow>,
    /// Wall-clock per method; kept out of the CSV outputs.
    pub wall_clock: Vec<(String, Duration)>,
}

impl MetricsReport {
    pub fn method(&self, m: MethodId) -> Option<&MethodMetrics> {
        self.methods.iter().find(|r| r.method == m.name())
    }

    pub fn trials_of(&self, m: MethodId) -> Vec<&TrialRow> {
        self.trials.iter().filter(|r| r.method == m.name()).collect()
    }

    /// Aligned, human-readable table.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<11} {:>4} {:>9} {:>9} {:>12} {:>10} {:>8} {:>7} {:>7}\n",
            "method", "CP", "cov/trial", "cov/trans", "volume", "vol ratio", "IoU", "vol win", "IoU win"
        );
        for m in &self.methods {
            s += &format!(
                "{:<11} {:>4} {:>9.4} {:>9.4} {:>12.4e} {:>10.3} {:>8.4} {:>7} {:>7}{}\n",
                m.method,
                if m.conformal { "yes" } else { "no" },
                m.coverage_trial_mean,
                m.coverage_transition,
                m.mean_volume,
                m.volume_ratio,
                m.mean_iou,
                m.claps_volume_wins,
                m.claps_iou_wins,
                if m.vacuous { "  (vacuous)" } else { "" }
            );
        }
        s
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn transition_coverage(p: &Prepared, test: &[TransitionRecord]) -> Result<f64> {
    let hits = test
        .par_iter()
        .map(|r| {
            let pred = p.predictor.predict(&r.s0, &r.u_des)?;
            conformal::contains(&r.s1.pose, &pred, &p.cal).map(|b| b as usize)
        })
        .sum::<Result<usize>>()?;
    Ok(hits as f64 / test.len() as f64)
}

struct TrialOutcome {
    rows: Vec<TrialRow>,
    elapsed: Vec<Duration>,
}

fn region_stats(pred: &GaussianPrediction, cal: &CalibrationResult, lattice: &SphereLattice, particles_fp: &Footprint, res: f64) -> Result<(f64, f64, usize)> {
    if cal.vacuous {
        return Ok((f64::INFINITY, f64::NAN, 0));
    }
    let mesh = regions::reconstruct_mesh_on(lattice, pred, cal)?;
    let fp = Footprint::from_mesh(&mesh, res)?;
    Ok((mesh.volume, iou(&fp, particles_fp)?, mesh.clipped.iter().filter(|c| **c).count()))
}

fn run_trial(i: usize, record: &TransitionRecord, prepared: &[Prepared], world: &World, cfg: &ExperimentConfig, lattice: &SphereLattice) -> Result<TrialOutcome> {
    let seed = stream_seed(cfg.seed, STREAM_TRIAL, i as u64);
    let particles = mc_particles(&record.s0, &record.u_des, world, cfg.particles, seed)?;
    let particles_fp = Footprint::from_points(&particles, cfg.iou_resolution)?;
    let mut rows = Vec::with_capacity(prepared.len());
    let mut elapsed = Vec::with_capacity(prepared.len());
    for p in prepared {
        let t0 = Instant::now();
        let pred = p.predictor.predict(&record.s0, &record.u_des)?;
        let coverage = regions::empirical_coverage(&particles, &pred, &p.cal)?;
        let (volume, iou, clipped_vertices) = region_stats(&pred, &p.cal, lattice, &particles_fp, cfg.iou_resolution)?;
        elapsed.push(t0.elapsed());
        rows.push(TrialRow { trial: i, method: p.method.name().to_string(), coverage, volume, iou, clipped_vertices });
    }
    Ok(TrialOutcome { rows, elapsed })
}

/// Per-trial coverage, volume and IoU for every prepared method, plus
/// per-transition coverage on the test set. Trials run in parallel and are
/// reduced in trial order.
pub fn evaluate(cfg: &ExperimentConfig, datasets: &Datasets, prepared: &[Prepared]) -> Result<MetricsReport> {
    if datasets.validation.is_empty() || datasets.test.is_empty() {
        return Err(Error::Empty("validation and test sets must be nonempty"));
    }
    let world = world_of(cfg)?;
    let lattice = SphereLattice::new(cfg.mesh_samples, None)?;
    let outcomes: Vec<TrialOutcome> = datasets
        .validation
        .par_iter()
        .enumerate()
        .map(|(i, r)| run_trial(i, r, prepared, &world, cfg, &lattice))
        .collect::<Result<_>>()?;

    let n_trials = outcomes.len();
    let claps = prepared.iter().position(|p| p.method == MethodId::Claps);
    let mut methods = Vec::with_capacity(prepared.len());
    let mut wall_clock = Vec::with_capacity(prepared.len());
    for (k, p) in prepared.iter().enumerate() {
        let t0 = Instant::now();
        let coverage_transition = transition_coverage(p, &datasets.test)?;
        let rows: Vec<&TrialRow> = outcomes.iter().map(|o| &o.rows[k]).collect();
        let reference: Option<Vec<&TrialRow>> = claps.map(|c| outcomes.iter().map(|o| &o.rows[c]).collect());
        let (volume_ratio, claps_volume_wins, claps_iou_wins) = match &reference {
            Some(refs) => (
                mean(rows.iter().zip(refs).map(|(r, c)| r.volume / c.volume).filter(|x| x.is_finite())),
                rows.iter().zip(refs).filter(|(r, c)| c.volume < r.volume).count(),
                rows.iter().zip(refs).filter(|(r, c)| c.iou > r.iou).count(),
            ),
            None => (f64::NAN, 0, 0),
        };
        methods.push(MethodMetrics {
            method: p.method.name().to_string(),
            conformal: p.method.is_conformal(),
            vacuous: p.cal.vacuous,
            q_hat: p.cal.q_hat,
            n_trials,
            coverage_trial_mean: mean(rows.iter().map(|r| r.coverage)),
            coverage_transition,
            n_test: datasets.test.len(),
            mean_volume: mean(rows.iter().map(|r| r.volume)),
            volume_ratio,
            mean_iou: mean(rows.iter().map(|r| r.iou)),
            claps_volume_wins,
            claps_iou_wins,
        });
        let trial_time: Duration = outcomes.iter().map(|o| o.elapsed[k]).sum();
        wall_clock.push((p.method.name().to_string(), trial_time + t0.elapsed()));
    }
    let trials = outcomes.into_iter().flat_map(|o| o.rows).collect();
    Ok(MetricsReport { methods, trials, wall_clock })
}

/// Calibrates every configured method from scratch and evaluates it.
pub fn run_experiment(cfg: &ExperimentConfig, datasets: &Datasets) -> Result<MetricsReport> {
    let mut cals = BTreeMap::new();
    for &m in &cfg.methods {
        let p = build_predictor(cfg, m.base(), &datasets.calibration)?;
        cals.insert(m, calibrate_method(cfg, m, p.as_ref(), &datasets.calibration)?);
    }
    let prepared = prepare(cfg, &datasets.calibration, &cals)?;
    evaluate(cfg, datasets, &prepared)
}
