use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, MethodId};
use super::evaluate::{
    build_predictor, calibrate_method, evaluate, generate, prepare, Datasets, MetricsReport, STREAM_CALIBRATION, STREAM_TEST,
    STREAM_VALIDATION,
};
use crate::bench::{grid_cases, integrator_table, BenchRow};
use crate::conformal::CalibrationResult;
use crate::dynamics::{ControlInput, LieModel, LieState, SsModel};
use crate::error::{Error, Result};
use crate::regions::{self, Footprint, RegionMesh};
use crate::simulate::{mc_particles, read_dataset, stream_seed, write_dataset, DatasetHeader, TransitionRecord};

pub const CONFIG_ECHO: &str = "config.json";
pub const CALIBRATION_DIR: &str = "calibration";
pub const STREAM_BOUNDARY: &str = "boundary";

fn dataset_path(dir: &Path, stream: &str) -> PathBuf {
    dir.join(format!("{stream}.jsonl"))
}

pub fn calibration_path(dir: &Path, method: MethodId) -> PathBuf {
    dir.join(CALIBRATION_DIR).join(format!("{}.json", method.slug()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn write_csv<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the resolved config next to the outputs it produced.
pub fn write_config_echo(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mut f = create(&out.join(CONFIG_ECHO))?;
    f.write_all(cfg.to_json()?.as_bytes())?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// Calibration, test and validation transitions as JSON-lines files.
pub fn cmd_gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<Datasets> {
    let data = generate(cfg)?;
    let world = cfg.resolved().world;
    for (stream, records) in [(STREAM_CALIBRATION, &data.calibration), (STREAM_TEST, &data.test), (STREAM_VALIDATION, &data.validation)] {
        write_dataset(create(&dataset_path(out, stream))?, &DatasetHeader::new(&world, stream), records)?;
    }
    write_config_echo(cfg, out)?;
    Ok(data)
}

fn load_stream(cfg: &ExperimentConfig, dir: &Path, stream: &str) -> Result<Vec<TransitionRecord>> {
    let path = dataset_path(dir, stream);
    let file = File::open(&path).map_err(|e| Error::Missing(format!("{}: {e}", path.display())))?;
    let (header, records) = read_dataset(BufReader::new(file))?;
    if header.stream != stream {
        return Err(Error::Schema(format!("{} holds stream '{}'", path.display(), header.stream)));
    }
    if header.world != cfg.resolved().world {
        return Err(Error::Schema(format!("{} was generated with different world parameters or seed", path.display())));
    }
    Ok(records)
}

pub fn load_datasets(cfg: &ExperimentConfig, dir: &Path) -> Result<Datasets> {
    Ok(Datasets {
        calibration: load_stream(cfg, dir, STREAM_CALIBRATION)?,
        test: load_stream(cfg, dir, STREAM_TEST)?,
        validation: load_stream(cfg, dir, STREAM_VALIDATION)?,
    })
}

/// One calibration file per configured method. Vacuous results are written
/// and reported on stderr.
pub fn cmd_calibrate(cfg: &ExperimentConfig, data_dir: &Path, out: &Path) -> Result<BTreeMap<MethodId, CalibrationResult>> {
    cfg.validate()?;
    let records = load_stream(cfg, data_dir, STREAM_CALIBRATION)?;
    let mut cals = BTreeMap::new();
    for &m in &cfg.methods {
        let predictor = build_predictor(cfg, m.base(), &records)?;
        let cal = calibrate_method(cfg, m, predictor.as_ref(), &records)?;
        if cal.vacuous {
            eprintln!("warning: calibration for {m} is vacuous (n_cal = {} too small for alpha = {})", cal.n_cal, cal.alpha);
        }
        let mut f = create(&calibration_path(out, m))?;
        f.write_all(cal.to_json()?.as_bytes())?;
        f.write_all(b"\n")?;
        f.flush()?;
        cals.insert(m, cal);
    }
    write_config_echo(cfg, out)?;
    Ok(cals)
}

pub fn load_calibrations(cfg: &ExperimentConfig, dir: &Path) -> Result<BTreeMap<MethodId, CalibrationResult>> {
    let mut cals = BTreeMap::new();
    for &m in &cfg.methods {
        let path = calibration_path(dir, m);
        let text = fs::read_to_string(&path).map_err(|_| Error::Missing(format!("no calibration for method {m} at {}", path.display())))?;
        let cal = CalibrationResult::from_json(&text)?;
        if cal.alpha != cfg.alpha {
            return Err(Error::Schema(format!("calibration for {m} uses alpha {} but the config asks for {}", cal.alpha, cfg.alpha)));
        }
        cals.insert(m, cal);
    }
    Ok(cals)
}

/// Metrics CSV, per-trial CSV, a text table and a wall-clock log.
pub fn cmd_evaluate(cfg: &ExperimentConfig, data_dir: &Path, cal_dir: &Path, out: &Path) -> Result<MetricsReport> {
    cfg.validate()?;
    let data = load_datasets(cfg, data_dir)?;
    let cals = load_calibrations(cfg, cal_dir)?;
    let prepared = prepare(cfg, &data.calibration, &cals)?;
    let report = evaluate(cfg, &data, &prepared)?;
    write_csv(&out.join("metrics.csv"), &report.methods)?;
    write_csv(&out.join("trials.csv"), &report.trials)?;
    fs::write(out.join("metrics.txt"), report.table())?;
    let mut log = create(&out.join("timing.log"))?;
    for (m, d) in &report.wall_clock {
        writeln!(log, "{m}\t{:.6} s", d.as_secs_f64())?;
    }
    log.flush()?;
    write_config_echo(cfg, out)?;
    Ok(report)
}

#[derive(Debug, Clone, serde::Serialize)]
struct ParticleRow {
    x: f64,
    y: f64,
    theta: f64,
    inside: bool,
}

/// Online path for one start state and input: region mesh, its footprint and
/// Monte-Carlo particles with their membership.
pub fn cmd_boundary(cfg: &ExperimentConfig, data_dir: &Path, cal_dir: &Path, method: MethodId, s0: &LieState, u: &ControlInput, out: &Path) -> Result<RegionMesh> {
    cfg.validate()?;
    let records = load_stream(cfg, data_dir, STREAM_CALIBRATION)?;
    let mut one = cfg.clone();
    one.methods = vec![method];
    let cals = load_calibrations(&one, cal_dir)?;
    let prepared = prepare(&one, &records, &cals)?;
    let p = &prepared[0];
    let pred = p.predictor.predict(s0, u)?;
    let mesh = regions::reconstruct_mesh(&pred, &p.cal, cfg.mesh_samples, None)?;
    mesh.write_vertices_csv(create(&out.join("mesh_vertices.csv"))?)?;
    mesh.write_triangles_csv(create(&out.join("mesh_triangles.csv"))?)?;
    Footprint::from_mesh(&mesh, cfg.iou_resolution)?.write_csv(create(&out.join("footprint.csv"))?)?;

    let world = super::evaluate::world_of(cfg)?;
    let particles = mc_particles(s0, u, &world, cfg.particles, stream_seed(cfg.seed, STREAM_BOUNDARY, 0))?;
    let rows: Vec<ParticleRow> = particles
        .iter()
        .map(|g| crate::conformal::contains(g, &pred, &p.cal).map(|inside| ParticleRow { x: g.x, y: g.y, theta: g.theta, inside }))
        .collect::<Result<_>>()?;
    write_csv(&out.join("particles.csv"), &rows)?;
    Footprint::from_points(&particles, cfg.iou_resolution)?.write_csv(create(&out.join("particle_footprint.csv"))?)?;
    write_config_echo(&one, out)?;
    Ok(mesh)
}

/// Terminal RMSE and cost per step for every integrator, representation and
/// step size, on the nominal deterministic model.
pub fn cmd_integrate_bench(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<BenchRow>> {
    let inertia = cfg.model_inertia();
    let lie = LieModel::unicycle(inertia)?;
    let ss = SsModel::new(inertia)?;
    let cases = grid_cases(&cfg.bench.grid, &lie);
    let rows = integrator_table(&cases, &cfg.bench.dts, cfg.bench.duration, cfg.bench.timing_calls, &lie, &ss)?;
    write_csv(&out.join("integrators.csv"), &rows)?;
    write_config_echo(cfg, out)?;
    Ok(rows)
}
