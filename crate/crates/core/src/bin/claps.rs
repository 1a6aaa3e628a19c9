use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use claps::cli::{self, parse_methods, BenchSpec, ExperimentConfig, MethodId};
use claps::dynamics::{ControlInput, LieState};
use claps::error::{Error, Result};
use claps::se2::Twist;

#[derive(Parser)]
#[command(name = "claps", version, about = "Conformal prediction regions for a stochastic SE(2) unicycle")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults to the desk preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Comma-separated method names, e.g. CLAPS,SS-EKF+CP.
    #[arg(long, global = true)]
    methods: Option<String>,
    /// Small-scale preset.
    #[arg(long, global = true, conflicts_with = "full")]
    desk: bool,
    /// Full-grid preset.
    #[arg(long, global = true)]
    full: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate calibration, test and validation datasets.
    GenData,
    /// Calibrate every configured method.
    Calibrate {
        /// Directory with the datasets (default: --out).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Coverage, volume and IoU of every configured method.
    Evaluate {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory holding calibration/<method>.json (default: --out).
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Region mesh, footprint and particles for one start state and input.
    Boundary {
        #[arg(long, default_value = "CLAPS")]
        method: String,
        /// Initial forward speed and yaw rate, "vx,wz".
        #[arg(long, default_value = "0.3,0.25")]
        twist: String,
        /// Commanded body accelerations "ddx,ddtheta" (ignored with --wrench).
        #[arg(long, default_value = "0.25,1.0")]
        accel: String,
        /// Commanded wrench "fx,tz".
        #[arg(long)]
        wrench: Option<String>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Integrator accuracy and cost table.
    IntegrateBench {
        /// Convergence study over five step sizes instead of the config's.
        #[arg(long)]
        orders: bool,
    },
    /// Print the resolved config.
    ShowConfig,
}

fn pair(s: &str, what: &str) -> Result<(f64, f64)> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidArgument(format!("{what}: {e}")))?;
    match v[..] {
        [a, b] => Ok((a, b)),
        _ => Err(Error::InvalidArgument(format!("{what} needs two comma-separated numbers"))),
    }
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match (&c.config, c.full) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, true) => ExperimentConfig::full(),
        (None, false) => ExperimentConfig::desk(),
    };
    if c.config.is_some() && (c.desk || c.full) {
        let preset = if c.full { ExperimentConfig::full() } else { ExperimentConfig::desk() };
        cfg.calibration = preset.calibration;
        cfg.test = preset.test;
        cfg.validation = preset.validation;
        cfg.particles = preset.particles;
        cfg.mesh_samples = preset.mesh_samples;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(a) = c.alpha {
        cfg.alpha = a;
    }
    if let Some(m) = &c.methods {
        cfg.methods = parse_methods(m)?;
    }
    cfg.out_dir = Some(c.out.clone());
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let out = cli.common.out.clone();
    match cli.command {
        Command::GenData => {
            let d = cli::cmd_gen_data(&cfg, &out)?;
            println!(
                "wrote {} calibration, {} test, {} validation records to {}",
                d.calibration.len(),
                d.test.len(),
                d.validation.len(),
                out.display()
            );
        }
        Command::Calibrate { data } => {
            let cals = cli::cmd_calibrate(&cfg, data.as_deref().unwrap_or(&out), &out)?;
            for (m, c) in &cals {
                println!("{m:<11} q_hat = {:<12.6} zeta = {:.6}{}", c.q_hat, c.zeta, if c.vacuous { "  (vacuous)" } else { "" });
            }
        }
        Command::Evaluate { data, calibration } => {
            let r = cli::cmd_evaluate(&cfg, data.as_deref().unwrap_or(&out), calibration.as_deref().unwrap_or(&out), &out)?;
            print!("{}", r.table());
        }
        Command::Boundary { method, twist, accel, wrench, data, calibration } => {
            let method: MethodId = method.parse()?;
            let (vx, wz) = pair(&twist, "--twist")?;
            let u = match wrench {
                Some(w) => {
                    let (fx, tz) = pair(&w, "--wrench")?;
                    ControlInput::new(fx, tz)
                }
                None => {
                    let (ddx, ddt) = pair(&accel, "--accel")?;
                    ControlInput::from_accelerations(&cfg.model_inertia(), ddx, ddt)
                }
            };
            let s0 = LieState::at_origin(Twist::new(vx, 0.0, wz));
            let mesh = cli::cmd_boundary(&cfg, data.as_deref().unwrap_or(&out), calibration.as_deref().unwrap_or(&out), method, &s0, &u, &out)?;
            println!("{method}: {} vertices, volume {:.6e} m^2 rad", mesh.vertices.len(), mesh.volume);
        }
        Command::IntegrateBench { orders } => {
            let mut cfg = cfg;
            if orders {
                cfg.bench = BenchSpec::orders();
            }
            for r in cli::cmd_integrate_bench(&cfg, &out)? {
                println!("{:<5} {:<3} dt={:<6} rmse={:.4e} ns/step={:.1}", r.integrator, r.space, r.dt, r.rmse, r.ns_per_step);
            }
        }
        Command::ShowConfig => println!("{}", cfg.to_json()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
