use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::{run_batch, write_report, BatchReport};
use super::{with_workers, ExperimentConfig};
use crate::error::Result;
use crate::pso::{self, HistoryRow, Position, DIM_NAMES};
use crate::signal::{calibrate_threshold, read_labeled_file, write_calibration_csv, Calibration};
use crate::sim::{run_trial, trial::write_trace_csv, TrialResult};
use crate::strategy::StrategyKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrialOutput {
    pub config_hash: String,
    pub result: TrialResult,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    fs::write(path, json)?;
    Ok(())
}

/// Runs one trial of `cfg.sim`. The trace, when requested, goes to its own
/// CSV and is left out of the JSON detail.
pub fn cmd_run_trial(
    cfg: &ExperimentConfig,
    pattern_seed: u64,
    robot_seed: u64,
    json_out: Option<&Path>,
    trace_out: Option<&Path>,
) -> Result<RunTrialOutput> {
    cfg.validate()?;
    let mut sim = cfg.sim.clone();
    sim.trace = sim.trace || trace_out.is_some();
    let mut result = run_trial(&sim, pattern_seed, robot_seed)?;
    let trace = result.trace.take();
    if let (Some(path), Some(rows)) = (trace_out, trace.as_ref()) {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        write_trace_csv(fs::File::create(path)?, rows)?;
    }
    let out = RunTrialOutput {
        config_hash: cfg.hash()?,
        result,
    };
    if let Some(path) = json_out {
        write_json(path, &out)?;
    }
    Ok(out)
}

fn finish_batch(cfg: &ExperimentConfig, report: BatchReport, dir: Option<&Path>) -> Result<BatchReport> {
    if let Some(dir) = dir {
        write_report(dir, &report, &cfg.to_toml()?)?;
    }
    Ok(report)
}

/// Paired-seed comparison of the configured strategies at `cfg.sim.fill_ratio`.
pub fn cmd_batch(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<BatchReport> {
    cfg.validate()?;
    let strategies = cfg.experiment.strategy_kinds()?;
    let seeds = cfg.experiment.seed_list();
    let hash = cfg.hash()?;
    let report = with_workers(cfg.experiment.workers, || {
        run_batch(&cfg.sim, &strategies, &[cfg.sim.fill_ratio], &seeds, &hash)
    })??;
    finish_batch(cfg, report, dir)
}

/// Paired-seed comparison across `cfg.experiment.fill_values`.
pub fn cmd_sweep_fill(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<BatchReport> {
    cfg.validate()?;
    let strategies = cfg.experiment.strategy_kinds()?;
    let seeds = cfg.experiment.seed_list();
    let hash = cfg.hash()?;
    let report = with_workers(cfg.experiment.workers, || {
        run_batch(&cfg.sim, &strategies, &cfg.experiment.fill_values, &seeds, &hash)
    })??;
    finish_batch(cfg, report, dir)
}

/// Soft feedback at every candidate `eta`, optionally next to the two
/// baselines, all on the same seeds.
pub fn cmd_sweep_eta(
    cfg: &ExperimentConfig,
    with_baselines: bool,
    dir: Option<&Path>,
) -> Result<BatchReport> {
    cfg.validate()?;
    let mut strategies = Vec::new();
    if with_baselines {
        strategies.push(StrategyKind::NoFeedback);
        strategies.push(StrategyKind::PositiveFeedback);
    }
    for &eta in &cfg.experiment.eta_candidates {
        strategies.push(StrategyKind::soft(eta)?);
    }
    let seeds = cfg.experiment.seed_list();
    let hash = cfg.hash()?;
    let report = with_workers(cfg.experiment.workers, || {
        run_batch(&cfg.sim, &strategies, &[cfg.sim.fill_ratio], &seeds, &hash)
    })??;
    finish_batch(cfg, report, dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub config_hash: String,
    pub best_position: Position,
    pub best_cost: f64,
    /// Global best after each iteration.
    pub global_best: Vec<f64>,
    #[serde(skip)]
    pub history: Vec<HistoryRow>,
}

/// `[sim]` fragment holding the five tuned parameters.
pub fn best_fragment(p: &Position) -> String {
    let mut out = String::from("[sim]\n");
    for (name, v) in DIM_NAMES.iter().zip(p) {
        if *name == "theta_o" {
            out.push_str(&format!("{name} = {}\n", v.round() as u64));
        } else {
            out.push_str(&format!("{name} = {v:?}\n"));
        }
    }
    out
}

fn write_history_csv(path: &Path, history: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["iteration", "particle", "cost", "personal_best", "global_best"];
    header.extend(DIM_NAMES);
    w.write_record(&header)?;
    for row in history {
        let mut rec = vec![
            row.iteration.to_string(),
            row.particle.to_string(),
            row.cost.to_string(),
            row.personal_best.to_string(),
            row.global_best.to_string(),
        ];
        rec.extend(row.position.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Tunes the five sampling parameters on the simulator with no feedback.
pub fn cmd_optimize(
    cfg: &ExperimentConfig,
    p0: Option<Position>,
    dir: Option<&Path>,
) -> Result<OptimizeReport> {
    cfg.validate()?;
    let base = cfg.sim.with_strategy(StrategyKind::NoFeedback);
    let outcome = with_workers(cfg.experiment.workers, || {
        pso::optimize(
            |p, seed| pso::swarm_objective(&base, p, seed),
            &cfg.bounds,
            &cfg.pso,
            p0,
        )
    })??;
    let report = OptimizeReport {
        config_hash: cfg.hash()?,
        best_position: outcome.best_position,
        best_cost: outcome.best_cost,
        global_best: outcome.global_best_history(),
        history: outcome.history,
    };
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
        write_history_csv(&dir.join("history.csv"), &report.history)?;
        fs::write(dir.join("best.toml"), best_fragment(&report.best_position))?;
        write_json(&dir.join("summary.json"), &report)?;
    }
    Ok(report)
}

/// Picks the energy threshold for a labeled sample file.
pub fn calibrate_file(
    input: &Path,
    true_fill: f64,
    grid_step: f64,
    dir: Option<&Path>,
) -> Result<Calibration> {
    let samples = read_labeled_file(input)?;
    let labeled: Vec<(f64, bool)> = samples.iter().map(|s| (s.energy, s.tile_bit == 1)).collect();
    let cal = calibrate_threshold(&labeled, true_fill, grid_step)?;
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        write_calibration_csv(fs::File::create(dir.join("calibration.csv"))?, &cal)?;
        write_json(&dir.join("summary.json"), &cal.chosen)?;
    }
    Ok(cal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::ExperimentConfig;
    use crate::pso::PsoConfig;

    #[test]
    fn fragment_loads_back() {
        let text = best_fragment(&pso::P_STAR);
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(pso::position_of(&cfg.sim), pso::P_STAR);
    }

    #[test]
    fn smoke_optimize_resumes() {
        let mut cfg = ExperimentConfig::default();
        cfg.sim.t_end_ms = 20_000.0;
        cfg.pso = PsoConfig {
            n_particles: 3,
            n_iterations: 2,
            n_reevaluations: 2,
            ..PsoConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let r = cmd_optimize(&cfg, Some(pso::P0), Some(dir.path())).unwrap();
        assert_eq!(r.history.len(), 6);
        assert!(r.global_best.windows(2).all(|w| w[1] <= w[0]));
        let text = fs::read_to_string(dir.path().join("history.csv")).unwrap();
        assert!(text.starts_with("iteration,particle,cost,personal_best,global_best,gamma0_ms"));

        // the best particle, evaluated on its own seeds, reproduces its cost
        let best = r
            .history
            .iter()
            .find(|h| h.position == r.best_position && h.cost == r.best_cost)
            .unwrap();
        let base = cfg.sim.with_strategy(StrategyKind::NoFeedback);
        let costs: Vec<f64> = (0..2)
            .map(|j| pso::swarm_objective(&base, &r.best_position, cfg.pso.evaluation_seed(best.iteration, j)).unwrap())
            .collect();
        assert_eq!(pso::particle_cost(&costs).unwrap(), r.best_cost);
    }
}
