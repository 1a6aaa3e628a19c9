use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Matrix2, Matrix3};
use serde::{Deserialize, Serialize};

use crate::bench::ORDER_STEPS;
use crate::conformal::ScoreKind;
use crate::error::{Error, Result};
use crate::estimate::{NoiseConfig, NoiseTiming, PredictorConfig};
use crate::grid::GridSpec;
use crate::simulate::{nominal_inertia, WorldParams};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// The compared prediction-region methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodId {
    #[serde(rename = "SS-EKF")]
    SsEkf,
    #[serde(rename = "InEKF")]
    InEkf,
    #[serde(rename = "InEKF+2M")]
    InEkf2M,
    #[serde(rename = "InEKF+MLE")]
    InEkfMle,
    #[serde(rename = "SS-PP+CP")]
    SsPpCp,
    #[serde(rename = "Lie-PP+CP")]
    LiePpCp,
    #[serde(rename = "SS-EKF+CP")]
    SsEkfCp,
    #[serde(rename = "CLAPS")]
    Claps,
}

/// Which one-step predictor a method builds on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Base {
    SsEkf,
    InEkf,
    InEkf2M,
    InEkfMle,
}

impl MethodId {
    pub const ALL: [MethodId; 8] = [
        MethodId::SsEkf,
        MethodId::InEkf,
        MethodId::InEkf2M,
        MethodId::InEkfMle,
        MethodId::SsPpCp,
        MethodId::LiePpCp,
        MethodId::SsEkfCp,
        MethodId::Claps,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MethodId::SsEkf => "SS-EKF",
            MethodId::InEkf => "InEKF",
            MethodId::InEkf2M => "InEKF+2M",
            MethodId::InEkfMle => "InEKF+MLE",
            MethodId::SsPpCp => "SS-PP+CP",
            MethodId::LiePpCp => "Lie-PP+CP",
            MethodId::SsEkfCp => "SS-EKF+CP",
            MethodId::Claps => "CLAPS",
        }
    }

    /// File-name friendly identifier.
    pub fn slug(&self) -> &'static str {
        match self {
            MethodId::SsEkf => "ss-ekf",
            MethodId::InEkf => "inekf",
            MethodId::InEkf2M => "inekf-2m",
            MethodId::InEkfMle => "inekf-mle",
            MethodId::SsPpCp => "ss-pp-cp",
            MethodId::LiePpCp => "lie-pp-cp",
            MethodId::SsEkfCp => "ss-ekf-cp",
            MethodId::Claps => "claps",
        }
    }

    pub fn base(&self) -> Base {
        match self {
            MethodId::SsEkf | MethodId::SsPpCp | MethodId::SsEkfCp => Base::SsEkf,
            MethodId::InEkf | MethodId::LiePpCp | MethodId::Claps => Base::InEkf,
            MethodId::InEkf2M => Base::InEkf2M,
            MethodId::InEkfMle => Base::InEkfMle,
        }
    }

    pub fn score_kind(&self) -> ScoreKind {
        match self {
            MethodId::SsEkf | MethodId::SsEkfCp => ScoreKind::MahalanobisSS,
            MethodId::SsPpCp => ScoreKind::L2SS,
            MethodId::LiePpCp => ScoreKind::L2Lie,
            MethodId::InEkf | MethodId::InEkf2M | MethodId::InEkfMle | MethodId::Claps => ScoreKind::ClapsMahalanobisLie,
        }
    }

    /// Split-conformal calibrated, as opposed to the predictor's own
    /// Gaussian `1 - alpha` ellipsoid.
    pub fn is_conformal(&self) -> bool {
        matches!(self, MethodId::SsPpCp | MethodId::LiePpCp | MethodId::SsEkfCp | MethodId::Claps)
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        MethodId::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(t) || m.slug().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{t}'")))
    }
}

pub fn parse_methods(list: &str) -> Result<Vec<MethodId>> {
    let mut out: Vec<MethodId> = list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(Error::InvalidArgument("method list is empty".into()));
    }
    Ok(out)
}

/// A set of transitions: the full grid times its repetitions, or
/// `box_samples` draws from the grid's bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub grid: GridSpec,
    #[serde(default)]
    pub box_samples: Option<usize>,
}

impl DatasetSpec {
    pub fn grid(grid: GridSpec) -> Self {
        Self { grid, box_samples: None }
    }

    pub fn uniform(grid: GridSpec, n: usize) -> Self {
        Self { grid, box_samples: Some(n) }
    }

    pub fn len(&self) -> usize {
        self.box_samples.unwrap_or(self.grid.n_points() * self.grid.reps)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub grid: GridSpec,
    pub dts: Vec<f64>,
    /// Simulated seconds per case.
    pub duration: f64,
    /// Steps timed per (integrator, space, dt); 0 disables timing.
    pub timing_calls: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self { grid: GridSpec::standard(5, 1), dts: vec![0.1], duration: 1.0, timing_calls: 50_000 }
    }
}

impl BenchSpec {
    /// Convergence study over the order step sizes on a 2-per-axis grid.
    pub fn orders() -> Self {
        Self { grid: GridSpec::standard(2, 1), dts: ORDER_STEPS.to_vec(), duration: 1.0, timing_calls: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Master seed; overrides `world.seed`.
    pub seed: u64,
    pub world: WorldParams,
    /// Inertia assumed by every predictor; `null` selects the nominal model.
    #[serde(default)]
    pub model_inertia: Option<Matrix3<f64>>,
    /// Predictor wrench covariance as a multiple of the world's.
    pub predictor_noise_scale: f64,
    #[serde(default)]
    pub noise_timing: NoiseTiming,
    pub alpha: f64,
    pub methods: Vec<MethodId>,
    pub calibration: DatasetSpec,
    /// Exchangeable held-out transitions for per-transition coverage.
    pub test: DatasetSpec,
    /// One trial per validation transition's start state and input.
    pub validation: DatasetSpec,
    pub particles: usize,
    pub mesh_samples: usize,
    pub iou_resolution: f64,
    #[serde(default)]
    pub bench: BenchSpec,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// Small preset: 160 calibration records, 16 trials of 1000 particles.
    pub fn desk() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 20_240_601,
            world: WorldParams::default(),
            model_inertia: None,
            predictor_noise_scale: 0.25,
            noise_timing: NoiseTiming::PerSubstep,
            alpha: 0.1,
            methods: MethodId::ALL.to_vec(),
            calibration: DatasetSpec::grid(GridSpec::standard(2, 10)),
            test: DatasetSpec::uniform(GridSpec::standard(2, 1), 1000),
            validation: DatasetSpec::grid(GridSpec::standard(2, 1)),
            particles: 1000,
            mesh_samples: 1000,
            iou_resolution: crate::regions::DEFAULT_RESOLUTION,
            bench: BenchSpec::default(),
            out_dir: None,
        }
    }

    /// Full-grid preset: 81 x 500 calibration records, 625 trials.
    pub fn full() -> Self {
        Self {
            calibration: DatasetSpec::grid(GridSpec::standard(3, 500)),
            test: DatasetSpec::uniform(GridSpec::standard(5, 1), 5000),
            validation: DatasetSpec::grid(GridSpec::standard(5, 1)),
            particles: 10_000,
            mesh_samples: 5000,
            ..Self::desk()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "config schema {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.resolved())?)
    }

    /// Copy with the master seed pushed into the world parameters.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.world.seed = c.seed;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if !(self.predictor_noise_scale >= 0.0) {
            return Err(Error::InvalidArgument("predictor noise scale must be >= 0".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("method list is empty".into()));
        }
        for d in [&self.calibration, &self.test, &self.validation] {
            d.grid.validate()?;
            if d.is_empty() {
                return Err(Error::InvalidArgument("datasets must be nonempty".into()));
            }
        }
        if self.particles == 0 {
            return Err(Error::InvalidArgument("particle count must be >= 1".into()));
        }
        if self.mesh_samples < 4 {
            return Err(Error::InvalidArgument("mesh sample count must be >= 4".into()));
        }
        if !(self.iou_resolution > 0.0) {
            return Err(Error::InvalidArgument("IoU resolution must be positive".into()));
        }
        Ok(())
    }

    pub fn model_inertia(&self) -> Matrix3<f64> {
        self.model_inertia.unwrap_or_else(nominal_inertia)
    }

    pub fn predictor_q0(&self) -> Matrix2<f64> {
        self.world.q_cont * self.predictor_noise_scale
    }

    pub fn predictor_config(&self) -> PredictorConfig {
        PredictorConfig {
            inertia: self.model_inertia(),
            noise: NoiseConfig { q0: self.predictor_q0(), timing: self.noise_timing },
            substep_hz: self.world.substep_hz,
            horizon: self.world.horizon,
        }
    }
}
