use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swarm_inspect::experiment::{
    audit_dir, calibrate_file, cmd_batch, cmd_optimize, cmd_run_trial, cmd_sweep_eta,
    cmd_sweep_fill, BatchReport, ExperimentConfig, OUT_ROOT_ENV,
};
use swarm_inspect::pso::{position_of, Position, DIMS, P0};
use swarm_inspect::strategy::{StrategyKind, StrategyName};
use swarm_inspect::Result;

#[derive(Parser)]
#[command(name = "swarm-inspect", version, about = "Swarm inspection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML campaign config; built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory for this run.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root for derived output directories.
    #[arg(long, env = OUT_ROOT_ENV, default_value = "runs")]
    out_root: PathBuf,
    /// Worker threads (0: one per hardware thread).
    #[arg(long)]
    workers: Option<usize>,
    /// Fill ratio of generated patterns.
    #[arg(long)]
    fill: Option<f64>,
    /// Robots in the swarm.
    #[arg(long)]
    n_robots: Option<usize>,
    /// Observation gate theta_o.
    #[arg(long)]
    theta_o: Option<u64>,
    /// Time limit in seconds.
    #[arg(long)]
    t_end_s: Option<f64>,
}

#[derive(Args, Clone)]
struct Seeds {
    /// Number of paired runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Seed of run 0; run i uses base + i.
    #[arg(long)]
    base_seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial; exit status 2 when it hits the time limit.
    RunTrial {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        pattern_seed: u64,
        #[arg(long, default_value_t = 0)]
        robot_seed: u64,
        #[arg(long)]
        strategy: Option<StrategyName>,
        #[arg(long)]
        eta: Option<f64>,
        /// Write the event trace to this CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Paired-seed comparison of strategies.
    Batch {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        seeds: Seeds,
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<StrategyName>>,
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Soft feedback over candidate eta values, next to the baselines.
    SweepEta {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        seeds: Seeds,
        #[arg(long, value_delimiter = ',')]
        etas: Option<Vec<f64>>,
        /// Skip the no-feedback and positive-feedback baselines.
        #[arg(long)]
        no_baselines: bool,
    },
    /// Paired comparison across fill ratios.
    SweepFill {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        seeds: Seeds,
        #[arg(long, value_delimiter = ',')]
        fills: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<StrategyName>>,
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Tune the five sampling parameters with PSO.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        particles: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        reevaluations: Option<usize>,
        #[arg(long)]
        pso_seed: Option<u64>,
        /// Starting particle: gamma0_ms,gamma_ms,tau_ms,theta_c_mm,theta_o
        #[arg(long, value_delimiter = ',', num_args = DIMS)]
        p0: Option<Vec<f64>>,
        /// Start from the best particle of an earlier run (its best.toml).
        #[arg(long, conflicts_with = "p0")]
        resume: Option<PathBuf>,
        /// 3 particles, 2 iterations, 2 re-evaluations, 60 s trials.
        #[arg(long)]
        smoke: bool,
    },
    /// Choose the energy threshold from labeled samples.
    Calibrate {
        /// CSV with columns energy,tile_bit,x,y
        #[arg(long)]
        input: PathBuf,
        /// Fill ratio of the floor the samples came from.
        #[arg(long)]
        true_fill: f64,
        #[arg(long, default_value_t = 0.025)]
        grid_step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that a report's aggregates match its rows.
    ReportAudit { dir: PathBuf },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(w) = common.workers {
        cfg.experiment.workers = w;
    }
    if let Some(f) = common.fill {
        cfg.sim.fill_ratio = f;
    }
    if let Some(n) = common.n_robots {
        cfg.sim.n_robots = n;
    }
    if let Some(t) = common.theta_o {
        cfg.sim.theta_o = t;
    }
    if let Some(t) = common.t_end_s {
        cfg.sim.t_end_ms = t * 1000.0;
    }
    Ok(cfg)
}

fn apply_seeds(cfg: &mut ExperimentConfig, seeds: &Seeds) {
    if let Some(n) = seeds.runs {
        cfg.experiment.n_runs = n;
        cfg.experiment.seeds.clear();
    }
    if let Some(b) = seeds.base_seed {
        cfg.experiment.base_seed = b;
        cfg.experiment.seeds.clear();
    }
}

fn out_dir(common: &Common, cfg: &ExperimentConfig, command: &str) -> Result<PathBuf> {
    if let Some(dir) = common.out.clone().or_else(|| cfg.output.dir.clone()) {
        return Ok(dir);
    }
    let hash = cfg.hash()?;
    Ok(common.out_root.join(format!("{command}-{}", &hash[..12])))
}

fn print_batch(report: &BatchReport, dir: &Path) {
    println!("config {}", report.config_hash);
    println!(
        "{:>6} {:<26} {:>5} {:>5} {:>10} {:>9} {:>9}",
        "f", "strategy", "runs", "done", "time_s", "std_s", "accuracy"
    );
    for g in &report.groups {
        let name = match g.eta {
            Some(eta) => format!("{} eta={eta}", g.strategy),
            None => g.strategy.clone(),
        };
        println!(
            "{:>6.2} {:<26} {:>5} {:>5} {:>10.3} {:>9.3} {:>9.4}",
            g.fill_ratio,
            name,
            g.runs,
            g.completed,
            g.decision_time_s.mean,
            g.decision_time_s.std,
            g.accuracy.mean
        );
    }
    for d in report.deltas.iter().filter(|d| d.candidate == "soft-feedback" && d.baseline != d.candidate) {
        println!(
            "f={:.2} soft-feedback{} vs {}: time -{:.2}%, accuracy loss {:.2} pp ({:.2}% relative)",
            d.fill_ratio,
            d.candidate_eta.map(|e| format!(" eta={e}")).unwrap_or_default(),
            d.baseline,
            100.0 * d.time_reduction,
            d.accuracy_loss_pp,
            100.0 * d.accuracy_loss_rel
        );
    }
    println!("wrote {}", dir.display());
}

fn parse_position(values: &[f64]) -> Position {
    let mut p = [0.0; DIMS];
    p.copy_from_slice(values);
    p
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::RunTrial {
            common,
            pattern_seed,
            robot_seed,
            strategy,
            eta,
            trace,
        } => {
            let mut cfg = load(&common)?;
            let eta = eta.or(cfg.sim.strategy.eta()).unwrap_or(cfg.experiment.eta);
            match strategy {
                Some(name) => cfg.sim.strategy = name.with_eta(eta)?,
                None => {
                    if cfg.sim.strategy.is_soft() {
                        cfg.sim.strategy = StrategyKind::soft(eta)?;
                    }
                }
            }
            cfg.validate()?;
            let dir = out_dir(&common, &cfg, "run-trial")?;
            let json = dir.join(format!("trial-{pattern_seed}-{robot_seed}.json"));
            let out = cmd_run_trial(&cfg, pattern_seed, robot_seed, Some(&json), trace.as_deref())?;
            let r = &out.result;
            println!(
                "{} f={} seeds=({}, {}) completed={} decision_time_s={:.3} accuracy={:.4} samples={} -> {}",
                cfg.sim.strategy,
                r.fill_ratio,
                pattern_seed,
                robot_seed,
                r.completed,
                r.decision_time_ms / 1000.0,
                r.accuracy,
                r.samples,
                json.display()
            );
            Ok(if r.completed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Batch {
            common,
            seeds,
            strategies,
            eta,
        } => {
            let mut cfg = load(&common)?;
            apply_seeds(&mut cfg, &seeds);
            if let Some(s) = strategies {
                cfg.experiment.strategies = s;
            }
            if let Some(e) = eta {
                cfg.experiment.eta = e;
            }
            cfg.validate()?;
            let dir = out_dir(&common, &cfg, "batch")?;
            let report = cmd_batch(&cfg, Some(&dir))?;
            print_batch(&report, &dir);
            Ok(ExitCode::SUCCESS)
        }
        Command::SweepEta {
            common,
            seeds,
            etas,
            no_baselines,
        } => {
            let mut cfg = load(&common)?;
            apply_seeds(&mut cfg, &seeds);
            if let Some(e) = etas {
                cfg.experiment.eta_candidates = e;
            }
            cfg.validate()?;
            let dir = out_dir(&common, &cfg, "sweep-eta")?;
            let report = cmd_sweep_eta(&cfg, !no_baselines, Some(&dir))?;
            print_batch(&report, &dir);
            Ok(ExitCode::SUCCESS)
        }
        Command::SweepFill {
            common,
            seeds,
            fills,
            strategies,
            eta,
        } => {
            let mut cfg = load(&common)?;
            apply_seeds(&mut cfg, &seeds);
            if let Some(f) = fills {
                cfg.experiment.fill_values = f;
            }
            if let Some(s) = strategies {
                cfg.experiment.strategies = s;
            }
            if let Some(e) = eta {
                cfg.experiment.eta = e;
            }
            cfg.validate()?;
            for &f in &cfg.experiment.fill_values {
                cfg.sim.with_fill(f).validate()?;
            }
            let dir = out_dir(&common, &cfg, "sweep-fill")?;
            let report = cmd_sweep_fill(&cfg, Some(&dir))?;
            print_batch(&report, &dir);
            Ok(ExitCode::SUCCESS)
        }
        Command::Optimize {
            common,
            particles,
            iterations,
            reevaluations,
            pso_seed,
            p0,
            resume,
            smoke,
        } => {
            let mut cfg = load(&common)?;
            if smoke {
                cfg.pso.n_particles = 3;
                cfg.pso.n_iterations = 2;
                cfg.pso.n_reevaluations = 2;
                cfg.sim.t_end_ms = 60_000.0;
            }
            if let Some(n) = particles {
                cfg.pso.n_particles = n;
            }
            if let Some(n) = iterations {
                cfg.pso.n_iterations = n;
            }
            if let Some(n) = reevaluations {
                cfg.pso.n_reevaluations = n;
            }
            if let Some(s) = pso_seed {
                cfg.pso.seed = s;
            }
            let start = match (p0, resume) {
                (Some(values), _) => parse_position(&values),
                (None, Some(path)) => position_of(&ExperimentConfig::load(&path)?.sim),
                (None, None) => P0,
            };
            cfg.validate()?;
            let dir = out_dir(&common, &cfg, "optimize")?;
            let report = cmd_optimize(&cfg, Some(start), Some(&dir))?;
            println!("config {}", report.config_hash);
            for (k, c) in report.global_best.iter().enumerate() {
                println!("iteration {k:>3} global best {c:.6}");
            }
            println!(
                "best cost {:.6} at gamma0_ms={} gamma_ms={} tau_ms={} theta_c_mm={} theta_o={}",
                report.best_cost,
                report.best_position[0],
                report.best_position[1],
                report.best_position[2],
                report.best_position[3],
                report.best_position[4]
            );
            println!("wrote {}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Calibrate {
            input,
            true_fill,
            grid_step,
            out,
        } => {
            let cal = calibrate_file(&input, true_fill, grid_step, out.as_deref())?;
            println!(
                "theta_E={:.3} fill_estimate={:.4} fill_error={:.4} fp={} fn={}",
                cal.theta, cal.chosen.fill_estimate, cal.chosen.fill_error, cal.chosen.fp, cal.chosen.fn_
            );
            if let Some(dir) = out {
                println!("wrote {}", dir.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ReportAudit { dir } => {
            let (groups, deltas) = audit_dir(&dir)?;
            println!("ok: {groups} groups and {deltas} deltas match their rows");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
