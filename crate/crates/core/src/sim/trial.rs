use std::io::Write;

use serde::{Deserialize, Serialize};

use super::arena::generate_pattern;
use super::world::{RobotState, World};
use super::SimConfig;
use crate::bayes::{Decision, Observation};
use crate::error::Result;

/// One line of the optional event trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub tick: u64,
    pub robot_id: usize,
    pub x: f64,
    pub y: f64,
    pub event: String,
    #[serde(rename = "O")]
    pub observation: Option<u8>,
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
    pub d_f: i8,
}

impl TraceRow {
    pub(crate) fn new(tick: u64, robot: &RobotState, event: &str, o: Option<Observation>) -> Self {
        Self {
            tick,
            robot_id: robot.id,
            x: robot.pose.x,
            y: robot.pose.y,
            event: event.to_string(),
            observation: o.map(Observation::bit),
            alpha: robot.posterior.alpha,
            beta: robot.posterior.beta,
            p: robot.belief.value(),
            d_f: robot.decision.code(),
        }
    }
}

/// Writes trace rows as CSV with columns `tick,robot_id,x,y,event,O,alpha,beta,p,d_f`.
pub fn write_trace_csv<W: Write>(writer: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotOutcome {
    pub id: usize,
    pub decision: Decision,
    /// Time of the robot's first decision.
    pub decision_time_ms: Option<f64>,
    pub terminal_belief: f64,
    pub observation_count: u64,
    pub received_count: u64,
    pub alpha: f64,
    pub beta: f64,
    /// Posterior-mean estimate of the fill ratio.
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub pattern_seed: u64,
    pub robot_seed: u64,
    pub strategy: String,
    pub eta: Option<f64>,
    pub fill_ratio: f64,
    pub correct_decision: Decision,
    /// Every robot decided before the time limit.
    pub completed: bool,
    /// Time of the last robot's decision, or the time limit.
    pub decision_time_ms: f64,
    pub end_time_ms: f64,
    pub accuracy: f64,
    pub samples: u64,
    /// Point-to-point copies, one per receiving robot.
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub robots: Vec<RobotOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRow>>,
}

/// Mean belief the robots assign to the true hypothesis.
pub fn accuracy(result: &TrialResult, true_majority: Decision) -> f64 {
    mean_accuracy(&result.robots, true_majority)
}

fn mean_accuracy(robots: &[RobotOutcome], true_majority: Decision) -> f64 {
    if robots.is_empty() {
        return 0.0;
    }
    let sum: f64 = robots
        .iter()
        .map(|r| match true_majority {
            Decision::MajorityVibrating => 1.0 - r.terminal_belief,
            _ => r.terminal_belief,
        })
        .sum();
    sum / robots.len() as f64
}

/// Runs one trial to completion or the time limit.
///
/// The result is a pure function of `(cfg, pattern_seed, robot_seed)`.
pub fn run_trial(cfg: &SimConfig, pattern_seed: u64, robot_seed: u64) -> Result<TrialResult> {
    cfg.validate()?;
    let arena = generate_pattern(pattern_seed, cfg.fill_ratio)?;
    let fill_ratio = arena.fill_ratio();
    let correct = Decision::for_fill_ratio(fill_ratio);

    let mut world = World::init(cfg, arena, robot_seed);
    let max_ticks = cfg.max_ticks();
    while world.tick < max_ticks && !world.all_decided() {
        world.step(cfg);
    }
    world.flush_bus();

    let completed = world.all_decided();
    let end_time_ms = world.clock_ms(cfg);
    let decision_time_ms = if completed {
        world
            .robots
            .iter()
            .filter_map(|r| r.decision_time_ms)
            .fold(0.0, f64::max)
    } else {
        cfg.t_end_ms
    };

    let robots: Vec<RobotOutcome> = world
        .robots
        .iter()
        .map(|r| RobotOutcome {
            id: r.id,
            decision: r.decision,
            decision_time_ms: r.decision_time_ms,
            terminal_belief: r.posterior.belief().value(),
            observation_count: r.observation_count,
            received_count: r.received_count,
            alpha: r.posterior.alpha,
            beta: r.posterior.beta,
            estimate: r.posterior.mean_estimate(),
        })
        .collect();

    Ok(TrialResult {
        pattern_seed,
        robot_seed,
        strategy: cfg.strategy.name().to_string(),
        eta: cfg.strategy.eta(),
        fill_ratio,
        correct_decision: correct,
        completed,
        decision_time_ms,
        end_time_ms,
        accuracy: mean_accuracy(&robots, correct),
        samples: world.robots.iter().map(|r| r.observation_count).sum(),
        messages_sent: world.bus.sent(),
        messages_delivered: world.bus.delivered(),
        robots,
        trace: world.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::StrategyKind;

    fn outcome(p: f64) -> RobotOutcome {
        RobotOutcome {
            id: 0,
            decision: Decision::Undecided,
            decision_time_ms: None,
            terminal_belief: p,
            observation_count: 0,
            received_count: 0,
            alpha: 1.0,
            beta: 1.0,
            estimate: 0.5,
        }
    }

    fn result_with(beliefs: &[f64]) -> TrialResult {
        TrialResult {
            pattern_seed: 0,
            robot_seed: 0,
            strategy: "no-feedback".into(),
            eta: None,
            fill_ratio: 0.48,
            correct_decision: Decision::MajorityNonVibrating,
            completed: false,
            decision_time_ms: 0.0,
            end_time_ms: 0.0,
            accuracy: 0.0,
            samples: 0,
            messages_sent: 0,
            messages_delivered: 0,
            robots: beliefs.iter().map(|&p| outcome(p)).collect(),
            trace: None,
        }
    }

    #[test]
    fn accuracy_examples() {
        let nv = Decision::MajorityNonVibrating;
        assert_eq!(accuracy(&result_with(&[1.0; 5]), nv), 1.0);
        assert_eq!(accuracy(&result_with(&[0.5; 5]), nv), 0.5);
        let r = result_with(&[0.9, 0.8, 1.0, 0.7, 0.6]);
        assert!((accuracy(&r, nv) - 0.8).abs() < 1e-15);
        assert!((accuracy(&r, Decision::MajorityVibrating) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn unreachable_gate_truncates() {
        let cfg = SimConfig {
            theta_o: 1_000_000_000,
            t_end_ms: 60_000.0,
            strategy: StrategyKind::NoFeedback,
            ..SimConfig::default()
        };
        let r = run_trial(&cfg, 1, 1).unwrap();
        assert!(!r.completed);
        assert_eq!(r.decision_time_ms, cfg.t_end_ms);
        assert!(r.robots.iter().all(|o| o.decision == Decision::Undecided));
    }

    #[test]
    fn uniform_quiet_floor_is_decided_correctly() {
        let cfg = SimConfig {
            fill_ratio: 0.0,
            strategy: StrategyKind::NoFeedback,
            ..SimConfig::default()
        };
        let r = run_trial(&cfg, 3, 4).unwrap();
        assert!(r.completed);
        for o in &r.robots {
            assert_eq!(o.decision, Decision::MajorityNonVibrating);
            assert!(o.terminal_belief > 1.0 - 1e-12);
            // the gate opens on the (theta_o + 1)-th own sample
            assert!(o.decision_time_ms.is_some());
        }
        assert!(r.accuracy > 1.0 - 1e-12);
    }

    #[test]
    fn trial_is_deterministic() {
        let cfg = SimConfig {
            t_end_ms: 120_000.0,
            trace: true,
            ..SimConfig::default()
        };
        let a = run_trial(&cfg, 10, 20).unwrap();
        let b = run_trial(&cfg, 10, 20).unwrap();
        assert_eq!(a, b);
        assert!(a.trace.as_ref().is_some_and(|t| !t.is_empty()));
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        write_trace_csv(&mut ca, a.trace.as_ref().unwrap()).unwrap();
        write_trace_csv(&mut cb, b.trace.as_ref().unwrap()).unwrap();
        assert_eq!(ca, cb);
        let header = String::from_utf8(ca).unwrap();
        assert!(header.starts_with("tick,robot_id,x,y,event,O,alpha,beta,p,d_f\n"));
    }
}
