use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arena::{Arena, SIDE_M};
use super::bus::BroadcastBus;
use super::kinematics::{
    apply_motor_noise, cauchy_drive_duration, ir_detect, random_turn, wrap_angle, MotorOffsets,
    Pose, BODY_RADIUS_M,
};
use super::trial::TraceRow;
use super::SimConfig;
use crate::bayes::{try_decide, Belief, BetaPosterior, Decision, Observation};
use crate::strategy::{outgoing_message, MessageContext};

/// Minimum gap between robot bodies at start-up.
const START_CLEARANCE_M: f64 = 0.05;
const PLACEMENT_STREAM: u64 = 1;
const ROBOT_STREAM_BASE: u64 = 2;
/// Message streams sit far above the motion streams so the two never collide.
const MESSAGE_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Driving { remaining_ms: f64 },
    /// Random-walk turn; signed angle still to rotate.
    Turning { remaining_rad: f64 },
    Sampling { remaining_ms: f64 },
    /// Collision-avoidance turn; signed angle still to rotate.
    Avoiding { remaining_rad: f64 },
}

#[derive(Debug, Clone)]
pub struct RobotState {
    pub id: usize,
    pub pose: Pose,
    pub mode: Mode,
    /// Motion interrupted by the current sampling pause.
    pub suspended: Option<Mode>,
    pub posterior: BetaPosterior,
    /// Belief as of the last own sample.
    pub belief: Belief,
    pub decision: Decision,
    pub decision_time_ms: Option<f64>,
    pub observation_count: u64,
    pub received_count: u64,
    pub latest_observation: Option<Observation>,
    /// Time of the last own sample.
    pub last_sample_ms: f64,
    pub motor: MotorOffsets,
    /// Motion randomness: drive durations and turns.
    pub rng: ChaCha8Rng,
    /// Message randomness. Kept apart from `rng` so trajectories do not depend
    /// on the sharing strategy.
    pub msg_rng: ChaCha8Rng,
}

impl RobotState {
    pub fn new(
        id: usize,
        pose: Pose,
        motor: MotorOffsets,
        rng: ChaCha8Rng,
        msg_rng: ChaCha8Rng,
    ) -> Self {
        Self {
            id,
            pose,
            mode: Mode::Driving { remaining_ms: 0.0 },
            suspended: None,
            posterior: BetaPosterior::uniform(),
            belief: Belief(0.5),
            decision: Decision::Undecided,
            decision_time_ms: None,
            observation_count: 0,
            received_count: 0,
            latest_observation: None,
            last_sample_ms: 0.0,
            motor,
            rng,
            msg_rng,
        }
    }

    fn fresh_drive(&mut self, cfg: &SimConfig) -> Mode {
        Mode::Driving {
            remaining_ms: cauchy_drive_duration(
                cfg.gamma0_ms,
                cfg.gamma_ms,
                cfg.tick_ms,
                cfg.max_drive_ms,
                &mut self.rng,
            ),
        }
    }
}

/// Complete simulation state.
#[derive(Debug, Clone)]
pub struct World {
    pub arena: Arena,
    pub robots: Vec<RobotState>,
    pub bus: BroadcastBus,
    pub tick: u64,
    pub trace: Option<Vec<TraceRow>>,
}

impl World {
    pub fn new(arena: Arena, robots: Vec<RobotState>) -> Self {
        let n = robots.len();
        Self {
            arena,
            robots,
            bus: BroadcastBus::new(n),
            tick: 0,
            trace: None,
        }
    }

    /// Places `cfg.n_robots` robots at random collision-free poses. Placement
    /// and every robot's private stream derive from `robot_seed`.
    pub fn init(cfg: &SimConfig, arena: Arena, robot_seed: u64) -> Self {
        let mut placement = ChaCha8Rng::seed_from_u64(robot_seed);
        placement.set_stream(PLACEMENT_STREAM);
        let (lo, hi) = (BODY_RADIUS_M, SIDE_M - BODY_RADIUS_M);
        let min_dist = 2.0 * BODY_RADIUS_M + START_CLEARANCE_M;

        let mut robots: Vec<RobotState> = Vec::with_capacity(cfg.n_robots);
        for id in 0..cfg.n_robots {
            let mut attempts = 0;
            let (x, y) = loop {
                let x = placement.random_range(lo..hi);
                let y = placement.random_range(lo..hi);
                attempts += 1;
                let clear = robots.iter().all(|r| {
                    (r.pose.x - x).powi(2) + (r.pose.y - y).powi(2) >= min_dist * min_dist
                });
                // crowded arenas fall back to overlapping starts
                if clear || attempts > 10_000 {
                    break (x, y);
                }
            };
            let heading = placement.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let mut rng = ChaCha8Rng::seed_from_u64(robot_seed);
            rng.set_stream(ROBOT_STREAM_BASE + id as u64);
            let motor = MotorOffsets::draw(&mut rng);
            let mut msg_rng = ChaCha8Rng::seed_from_u64(robot_seed);
            msg_rng.set_stream(MESSAGE_STREAM_BASE + id as u64);
            let mut robot = RobotState::new(id, Pose { x, y, heading }, motor, rng, msg_rng);
            robot.mode = robot.fresh_drive(cfg);
            robots.push(robot);
        }
        let mut world = World::new(arena, robots);
        if cfg.trace {
            world.trace = Some(Vec::new());
        }
        world
    }

    pub fn clock_ms(&self, cfg: &SimConfig) -> f64 {
        self.tick as f64 * cfg.tick_ms
    }

    pub fn all_decided(&self) -> bool {
        !self.robots.is_empty() && self.robots.iter().all(|r| r.decision.is_decided())
    }

    /// Advances the world by one tick, updating robots in id order.
    pub fn step(&mut self, cfg: &SimConfig) {
        self.tick += 1;
        let now = self.clock_ms(cfg);
        for i in 0..self.robots.len() {
            self.move_robot(i, cfg);
            self.maybe_sample(i, cfg, now);
            self.receive(i);
        }
    }

    fn move_robot(&mut self, i: usize, cfg: &SimConfig) {
        let dt_ms = cfg.tick_ms;
        match self.robots[i].mode {
            Mode::Sampling { remaining_ms } => {
                let left = remaining_ms - dt_ms;
                let robot = &mut self.robots[i];
                robot.mode = if left <= 0.0 {
                    match robot.suspended.take() {
                        Some(mode) => mode,
                        None => robot.fresh_drive(cfg),
                    }
                } else {
                    Mode::Sampling { remaining_ms: left }
                };
            }
            Mode::Turning { remaining_rad } | Mode::Avoiding { remaining_rad } => {
                let step = cfg.turn_rate_rad_s * dt_ms / 1000.0;
                let robot = &mut self.robots[i];
                if remaining_rad.abs() <= step {
                    robot.pose.heading = wrap_angle(robot.pose.heading + remaining_rad);
                    robot.mode = robot.fresh_drive(cfg);
                } else {
                    let turn = step.copysign(remaining_rad);
                    robot.pose.heading = wrap_angle(robot.pose.heading + turn);
                    let remaining_rad = remaining_rad - turn;
                    robot.mode = match robot.mode {
                        Mode::Avoiding { .. } => Mode::Avoiding { remaining_rad },
                        _ => Mode::Turning { remaining_rad },
                    };
                }
            }
            Mode::Driving { remaining_ms } => {
                let others: Vec<(f64, f64)> = self
                    .robots
                    .iter()
                    .filter(|r| r.id != i)
                    .map(|r| (r.pose.x, r.pose.y))
                    .collect();
                let robot = &mut self.robots[i];
                if ir_detect(robot.pose, &others, cfg.theta_c_mm) {
                    let phi = random_turn(&mut robot.rng);
                    robot.mode = Mode::Avoiding { remaining_rad: phi };
                    return;
                }

                let dt = dt_ms / 1000.0;
                let (vl, vr) = apply_motor_noise(cfg.speed_mps, cfg.speed_mps, robot.motor);
                let v = 0.5 * (vl + vr);
                let w = (vr - vl) / cfg.wheel_base_m;
                let mid = robot.pose.heading + 0.5 * w * dt;
                robot.pose.x += v * mid.cos() * dt;
                robot.pose.y += v * mid.sin() * dt;
                robot.pose.heading = wrap_angle(robot.pose.heading + w * dt);

                // positional pushback keeps bodies from overlapping
                let min_dist = 2.0 * BODY_RADIUS_M;
                for &(ox, oy) in &others {
                    let (dx, dy) = (robot.pose.x - ox, robot.pose.y - oy);
                    let d = (dx * dx + dy * dy).sqrt();
                    if d < min_dist {
                        let (ux, uy) = if d > 1e-12 {
                            (dx / d, dy / d)
                        } else {
                            (-robot.pose.heading.cos(), -robot.pose.heading.sin())
                        };
                        robot.pose.x = ox + ux * min_dist;
                        robot.pose.y = oy + uy * min_dist;
                    }
                }

                let (lo, hi) = (BODY_RADIUS_M, SIDE_M - BODY_RADIUS_M);
                let contact = robot.pose.x < lo
                    || robot.pose.x > hi
                    || robot.pose.y < lo
                    || robot.pose.y > hi;
                robot.pose.x = robot.pose.x.clamp(lo, hi);
                robot.pose.y = robot.pose.y.clamp(lo, hi);

                let left = remaining_ms - dt_ms;
                robot.mode = if contact {
                    Mode::Avoiding {
                        remaining_rad: random_turn(&mut robot.rng),
                    }
                } else if left <= 0.0 {
                    Mode::Turning {
                        remaining_rad: random_turn(&mut robot.rng),
                    }
                } else {
                    Mode::Driving { remaining_ms: left }
                };
            }
        }
    }

    fn maybe_sample(&mut self, i: usize, cfg: &SimConfig, now: f64) {
        let tick = self.tick;
        let robot = &mut self.robots[i];
        if matches!(robot.mode, Mode::Sampling { .. }) || now - robot.last_sample_ms <= cfg.tau_ms {
            return;
        }

        let o = self.arena.sample_floor(robot.pose.x, robot.pose.y);
        robot.posterior = robot.posterior.update(o);
        robot.belief = robot.posterior.belief();
        robot.observation_count += 1;
        robot.last_sample_ms = now;
        robot.latest_observation = Some(o);

        let decision = try_decide(
            robot.belief,
            robot.observation_count,
            cfg.theta_o,
            cfg.p_c,
            robot.decision,
            cfg.strategy.is_soft(),
        );
        let changed = decision != robot.decision;
        if changed && robot.decision_time_ms.is_none() {
            robot.decision_time_ms = Some(now);
        }
        robot.decision = decision;

        let ctx = MessageContext {
            latest_observation: o,
            belief: robot.belief,
            posterior_variance: robot.posterior.variance(),
            decision: robot.decision,
        };
        let bit = outgoing_message(cfg.strategy, &ctx, &mut robot.msg_rng);
        self.bus.broadcast(robot.id, bit, tick);

        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRow::new(tick, robot, "sample", Some(o)));
            if changed {
                trace.push(TraceRow::new(tick, robot, "decide", None));
            }
        }

        if cfg.sample_pause_ms > 0.0 {
            robot.suspended = Some(robot.mode);
            robot.mode = Mode::Sampling {
                remaining_ms: cfg.sample_pause_ms,
            };
        }
    }

    fn receive(&mut self, i: usize) {
        let robot = &mut self.robots[i];
        for msg in self.bus.drain(i, self.tick) {
            robot.posterior = robot.posterior.update(msg.bit);
            robot.received_count += 1;
        }
    }

    /// Delivers everything still on the bus.
    pub fn flush_bus(&mut self) {
        for robot in &mut self.robots {
            for msg in self.bus.flush(robot.id) {
                robot.posterior = robot.posterior.update(msg.bit);
                robot.received_count += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::arena::GRID;
    use crate::strategy::StrategyKind;

    fn robot_at(id: usize, x: f64, y: f64, seed: u64) -> RobotState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id as u64);
        let mut msg_rng = rng.clone();
        msg_rng.set_stream(MESSAGE_STREAM_BASE + id as u64);
        let pose = Pose { x, y, heading: 0.0 };
        let mut r = RobotState::new(id, pose, MotorOffsets::IDENTITY, rng, msg_rng);
        r.mode = Mode::Driving {
            remaining_ms: 1e9,
        };
        r
    }

    #[test]
    fn empty_world_only_advances_clock() {
        let cfg = SimConfig::default();
        let mut w = World::new(Arena::from_tiles([[false; GRID]; GRID]), vec![]);
        w.step(&cfg);
        w.step(&cfg);
        assert_eq!(w.tick, 2);
        assert_eq!(w.clock_ms(&cfg), 64.0);
        assert!(w.robots.is_empty());
        assert_eq!(w.bus.sent(), 0);
    }

    #[test]
    fn lone_robot_samples_every_tau() {
        let cfg = SimConfig {
            n_robots: 1,
            tau_ms: 32.0,
            sample_pause_ms: 0.0,
            ..SimConfig::default()
        };
        let mut w = World::new(
            Arena::from_tiles([[true; GRID]; GRID]),
            vec![robot_at(0, 0.5, 0.5, 1)],
        );
        for k in 1..=20u64 {
            w.step(&cfg);
            // first sample at t = 64 > tau, then every other tick
            assert_eq!(w.robots[0].observation_count, k / 2);
        }
        assert_eq!(w.robots[0].posterior.alpha, 11.0);
    }

    #[test]
    fn two_robot_hand_trace() {
        // Robot 0 samples a vibrating tile at tick k; robot 1 has the bit at k + 1.
        let cfg = SimConfig {
            n_robots: 2,
            tau_ms: 60.0,
            strategy: StrategyKind::NoFeedback,
            ..SimConfig::default()
        };
        let mut tiles = [[false; GRID]; GRID];
        tiles[2][0] = true; // (x in [0, 0.2), y in [0.4, 0.6))
        let mut w = World::new(
            Arena::from_tiles(tiles),
            vec![robot_at(0, 0.1, 0.5, 2), robot_at(1, 0.9, 0.5, 3)],
        );
        // Tick 1 (t = 32): nobody samples.
        w.step(&cfg);
        assert_eq!(w.robots[0].observation_count, 0);
        assert_eq!(w.robots[1].posterior, BetaPosterior::uniform());
        // Tick 2 (t = 64 > 60): both sample; robot 0 reads 1, robot 1 reads 0.
        w.step(&cfg);
        assert_eq!(w.robots[0].posterior, BetaPosterior { alpha: 2.0, beta: 1.0 });
        assert_eq!(w.robots[1].posterior, BetaPosterior { alpha: 1.0, beta: 2.0 });
        assert_eq!(w.bus.in_flight(), 2);
        // Tick 3: each holds the other's bit.
        w.step(&cfg);
        assert_eq!(w.robots[0].posterior, BetaPosterior { alpha: 2.0, beta: 2.0 });
        assert_eq!(w.robots[1].posterior, BetaPosterior { alpha: 2.0, beta: 2.0 });
        assert_eq!(w.robots[1].received_count, 1);
    }

    #[test]
    fn sampling_pauses_motion() {
        let cfg = SimConfig {
            n_robots: 1,
            tau_ms: 1000.0,
            ..SimConfig::default()
        };
        let mut w = World::new(
            Arena::from_tiles([[false; GRID]; GRID]),
            vec![robot_at(0, 0.5, 0.5, 4)],
        );
        while w.robots[0].observation_count == 0 {
            w.step(&cfg);
        }
        let parked = w.robots[0].pose;
        for _ in 0..15 {
            w.step(&cfg);
            assert_eq!(w.robots[0].pose, parked);
        }
        for _ in 0..3 {
            w.step(&cfg);
        }
        assert_ne!(w.robots[0].pose, parked);
    }

    #[test]
    fn placement_is_clear_and_inside() {
        let cfg = SimConfig::default();
        for seed in 0..50 {
            let w = World::init(&cfg, Arena::from_tiles([[false; GRID]; GRID]), seed);
            for (a, ra) in w.robots.iter().enumerate() {
                assert!(ra.pose.x >= BODY_RADIUS_M && ra.pose.x <= 1.0 - BODY_RADIUS_M);
                for rb in &w.robots[a + 1..] {
                    let d = ((ra.pose.x - rb.pose.x).powi(2) + (ra.pose.y - rb.pose.y).powi(2)).sqrt();
                    assert!(d >= 2.0 * BODY_RADIUS_M + START_CLEARANCE_M);
                }
            }
        }
    }
}
