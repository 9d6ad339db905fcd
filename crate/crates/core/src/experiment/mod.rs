//! Campaign configuration, paired-seed batches and reports.

mod commands;
mod report;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pso::{PsoConfig, SearchBounds};
use crate::sim::SimConfig;
use crate::strategy::{StrategyKind, StrategyName};

pub use commands::{
    calibrate_file, cmd_batch, cmd_optimize, cmd_run_trial, cmd_sweep_eta, cmd_sweep_fill,
    OptimizeReport, RunTrialOutput,
};
pub use report::{
    audit_dir, audit_report, read_rows_csv, run_batch, write_report, BatchReport, Delta,
    GroupSummary, RobotRow, TrialRow,
};

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "SWARM_INSPECT_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub strategies: Vec<StrategyName>,
    /// Soft-feedback parameter used wherever a strategy list names soft feedback.
    pub eta: f64,
    pub n_runs: usize,
    pub base_seed: u64,
    /// Explicit seeds; overrides `base_seed` and `n_runs` when non-empty.
    pub seeds: Vec<u64>,
    pub fill_values: Vec<f64>,
    pub eta_candidates: Vec<f64>,
    /// Worker threads; 0 means one per hardware thread.
    pub workers: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            strategies: vec![
                StrategyName::NoFeedback,
                StrategyName::PositiveFeedback,
                StrategyName::SoftFeedback,
            ],
            eta: 1000.0,
            n_runs: 100,
            base_seed: 0,
            seeds: Vec::new(),
            fill_values: vec![0.44, 0.48, 0.52, 0.56],
            eta_candidates: vec![10.0, 100.0, 500.0, 1000.0, 5000.0],
            workers: 0,
        }
    }
}

impl ExperimentSettings {
    /// Run `i` uses seed `base_seed + i` for both the pattern and the robots.
    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.n_runs as u64)
                .map(|i| self.base_seed.wrapping_add(i))
                .collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn strategy_kinds(&self) -> Result<Vec<StrategyKind>> {
        self.strategies.iter().map(|s| s.with_eta(self.eta)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    /// Campaign directory; derived from the output root when unset.
    pub dir: Option<PathBuf>,
}

/// Everything a campaign needs, loadable from one TOML file with sections
/// `[sim]`, `[experiment]`, `[pso]`, `[bounds]` and `[output]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub experiment: ExperimentSettings,
    pub pso: PsoConfig,
    pub bounds: SearchBounds,
    pub output: OutputSettings,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.pso.validate()?;
        self.bounds.validate()?;
        self.experiment.strategy_kinds()?;
        if self.experiment.seed_list().is_empty() {
            return Err(Error::Config("n_runs must be >= 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML serialization, as lowercase hex.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// Runs `f` on a pool of `workers` threads (0: one per hardware thread).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        builder = builder.num_threads(workers);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}
