//! Tick-based 2D simulation of the inspection swarm.
//!
//! Robots are discs with differential-drive kinematics performing a
//! Cauchy-duration random walk on the 1 m arena. Every `tau` milliseconds a
//! robot pauses, samples the floor (noise-free), updates its posterior and
//! broadcasts one bit according to its strategy. Messages reach every other
//! robot on the following tick.

pub mod arena;
pub mod bus;
pub mod kinematics;
pub mod trial;
pub mod world;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bayes::validate_credibility;
use crate::error::{Error, Result};
use crate::strategy::StrategyKind;

pub use arena::{generate_pattern, sample_floor, Arena};
pub use bus::BroadcastBus;
pub use kinematics::{
    apply_motor_noise, cauchy_drive_duration, ir_detect, random_turn, MotorOffsets, Pose,
};
pub use trial::{accuracy, run_trial, write_trace_csv, RobotOutcome, TraceRow, TrialResult};
pub use world::{Mode, RobotState, World};

/// Everything that parameterizes one trial apart from the seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_robots: usize,
    /// Location of the drive-duration Cauchy distribution.
    pub gamma0_ms: f64,
    /// Scale of the drive-duration Cauchy distribution.
    pub gamma_ms: f64,
    /// Interval between floor samples.
    pub tau_ms: f64,
    /// IR obstacle detection range.
    pub theta_c_mm: f64,
    /// Own samples required before a decision may be made.
    pub theta_o: u64,
    pub p_c: f64,
    pub strategy: StrategyKind,
    pub fill_ratio: f64,
    pub t_end_ms: f64,
    pub tick_ms: f64,
    pub speed_mps: f64,
    pub turn_rate_rad_s: f64,
    pub sample_pause_ms: f64,
    /// Upper clamp for drive durations.
    pub max_drive_ms: f64,
    /// Distance between the drive wheels, used for motor-offset drift.
    pub wheel_base_m: f64,
    /// Record a per-event trace in the trial result.
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_robots: 5,
            gamma0_ms: 7565.0,
            gamma_ms: 15000.0,
            tau_ms: 2025.0,
            theta_c_mm: 50.0,
            theta_o: 85,
            p_c: 0.95,
            strategy: StrategyKind::SoftFeedback { eta: 1000.0 },
            fill_ratio: 0.48,
            t_end_ms: 1_200_000.0,
            tick_ms: 32.0,
            speed_mps: 0.05,
            turn_rate_rad_s: PI,
            sample_pause_ms: 500.0,
            max_drive_ms: 60_000.0,
            wheel_base_m: 0.025,
            trace: false,
        }
    }
}

fn check(name: &'static str, value: f64, min: f64, max: f64) -> Result<()> {
    if value.is_finite() && value >= min && value <= max {
        Ok(())
    } else {
        Err(Error::OutOfBounds {
            name,
            value,
            min,
            max,
        })
    }
}

impl SimConfig {
    /// Sanity bounds for a runnable configuration. These are wider than the
    /// optimizer's search box.
    pub fn validate(&self) -> Result<()> {
        check("n_robots", self.n_robots as f64, 1.0, 1000.0)?;
        check("gamma0_ms", self.gamma0_ms, 0.0, 1e9)?;
        check("gamma_ms", self.gamma_ms, 0.0, 1e9)?;
        check("tau_ms", self.tau_ms, 1.0, 1e9)?;
        check("theta_c_mm", self.theta_c_mm, 1.0, 1000.0)?;
        validate_credibility(self.p_c)?;
        if let StrategyKind::SoftFeedback { eta } = self.strategy {
            check("eta", eta, 0.0, f64::MAX)?;
        }
        arena::vibrating_tiles_for(self.fill_ratio)?;
        check("tick_ms", self.tick_ms, 1.0, 1000.0)?;
        check("t_end_ms", self.t_end_ms, self.tick_ms, 1e10)?;
        check("speed_mps", self.speed_mps, 0.0, 10.0)?;
        check("turn_rate_rad_s", self.turn_rate_rad_s, 1e-3, 100.0)?;
        check("sample_pause_ms", self.sample_pause_ms, 0.0, 1e6)?;
        check("max_drive_ms", self.max_drive_ms, self.tick_ms, 1e9)?;
        check("wheel_base_m", self.wheel_base_m, 1e-3, 1.0)?;
        Ok(())
    }

    pub fn with_strategy(&self, strategy: StrategyKind) -> Self {
        Self {
            strategy,
            ..self.clone()
        }
    }

    pub fn with_fill(&self, fill_ratio: f64) -> Self {
        Self {
            fill_ratio,
            ..self.clone()
        }
    }

    /// Number of ticks before the time limit.
    pub fn max_ticks(&self) -> u64 {
        (self.t_end_ms / self.tick_ms).ceil() as u64
    }
}
