//! Noise-resistant particle swarm optimization over the five sampling
//! parameters `(gamma0_ms, gamma_ms, tau_ms, theta_c_mm, theta_o)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::Decision;
use crate::error::{Error, Result};
use crate::sim::{run_trial, SimConfig, TrialResult};
use crate::stats::{mean_std, Summary};
use crate::strategy::StrategyKind;

pub const DIMS: usize = 5;
pub const DIM_NAMES: [&str; DIMS] = ["gamma0_ms", "gamma_ms", "tau_ms", "theta_c_mm", "theta_o"];
/// Index of the integer-valued dimension.
pub const THETA_O: usize = 4;

/// Penalty factor for a wrong decision.
pub const WRONG_DECISION_FACTOR: f64 = 5.0;
/// Fill-ratio error worth one tile of the 25-tile arena.
pub const ONE_TILE_ERROR: f64 = 0.04;

pub type Position = [f64; DIMS];

/// Hand-picked starting particle.
pub const P0: Position = [2000.0, 5000.0, 2000.0, 60.0, 50.0];
/// Best particle of the reference optimization campaign.
pub const P_STAR: Position = [7565.0, 15000.0, 2025.0, 50.0, 85.0];

/// Cost of one robot's outcome in one evaluation.
///
/// `1 + |estimate - true_f| / 0.04`, scaled by `t / t_end` for a correct
/// decision and by 5 for a wrong one.
pub fn robot_cost(
    decision: Decision,
    decision_time_ms: f64,
    estimate_f: f64,
    true_f: f64,
    correct: Decision,
    t_end_ms: f64,
) -> f64 {
    // in tile units, so grid fractions such as 0.52 and 0.48 differ by exactly 1
    let tiles = 1.0 / ONE_TILE_ERROR;
    let eps_f = 1.0 + (estimate_f * tiles - true_f * tiles).abs();
    match decision {
        Decision::Undecided => eps_f,
        d if d == correct => eps_f * decision_time_ms / t_end_ms,
        _ => eps_f * WRONG_DECISION_FACTOR,
    }
}

/// Sum of the robot costs of one evaluation. `n_robots` guards the length.
pub fn evaluation_cost(robot_costs: &[f64], n_robots: usize) -> Result<f64> {
    if robot_costs.len() != n_robots {
        return Err(Error::Length {
            expected: n_robots,
            actual: robot_costs.len(),
        });
    }
    Ok(robot_costs.iter().sum())
}

/// `mean + 1.1 * std` over re-evaluations, population standard deviation.
pub fn particle_cost(evaluation_costs: &[f64]) -> Result<f64> {
    if evaluation_costs.len() < 2 {
        return Err(Error::Config(format!(
            "particle cost needs at least 2 evaluations, got {}",
            evaluation_costs.len()
        )));
    }
    let (mu, sigma) = mean_std(evaluation_costs);
    Ok(mu + 1.1 * sigma)
}

/// Every term of one particle's cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// `robot_costs[j][i]`: robot `i` in evaluation `j`.
    pub robot_costs: Vec<Vec<f64>>,
    pub evaluation_costs: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub cost: f64,
}

impl CostBreakdown {
    pub fn new(robot_costs: Vec<Vec<f64>>) -> Result<Self> {
        let evaluation_costs = robot_costs
            .iter()
            .map(|r| evaluation_cost(r, r.len()))
            .collect::<Result<Vec<_>>>()?;
        let cost = particle_cost(&evaluation_costs)?;
        let (mean, std) = mean_std(&evaluation_costs);
        Ok(Self {
            robot_costs,
            evaluation_costs,
            mean,
            std,
            cost,
        })
    }
}

/// Per-robot costs of one finished trial.
pub fn trial_robot_costs(result: &TrialResult, t_end_ms: f64) -> Vec<f64> {
    result
        .robots
        .iter()
        .map(|r| {
            robot_cost(
                r.decision,
                r.decision_time_ms.unwrap_or(t_end_ms),
                r.estimate,
                result.fill_ratio,
                result.correct_decision,
                t_end_ms,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds {
    pub min: Position,
    pub max: Position,
}

impl Default for SearchBounds {
    fn default() -> Self {
        Self {
            min: [2000.0, 0.0, 1000.0, 50.0, 50.0],
            max: [15000.0, 15000.0, 3000.0, 100.0, 200.0],
        }
    }
}

impl SearchBounds {
    pub fn validate(&self) -> Result<()> {
        for d in 0..DIMS {
            if !(self.min[d].is_finite() && self.max[d].is_finite() && self.min[d] <= self.max[d]) {
                return Err(Error::Config(format!(
                    "bounds for {} are [{}, {}]",
                    DIM_NAMES[d], self.min[d], self.max[d]
                )));
            }
        }
        Ok(())
    }

    /// Clamps into the box and rounds `theta_o`.
    pub fn clamp(&self, p: &Position) -> Position {
        let mut out = *p;
        for d in 0..DIMS {
            out[d] = out[d].clamp(self.min[d], self.max[d]);
        }
        out[THETA_O] = out[THETA_O].round().clamp(self.min[THETA_O], self.max[THETA_O]);
        out
    }

    pub fn contains(&self, p: &Position) -> bool {
        (0..DIMS).all(|d| p[d] >= self.min[d] && p[d] <= self.max[d])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Position {
        let mut p = [0.0; DIMS];
        for d in 0..DIMS {
            p[d] = if self.max[d] > self.min[d] {
                rng.random_range(self.min[d]..=self.max[d])
            } else {
                self.min[d]
            };
        }
        self.clamp(&p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoConfig {
    pub omega: f64,
    pub omega_p: f64,
    pub omega_g: f64,
    pub n_particles: usize,
    pub n_iterations: usize,
    pub n_reevaluations: usize,
    pub seed: u64,
    /// Draw `r1`, `r2` per dimension instead of one scalar per term.
    pub per_dimension_random: bool,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            omega: 0.75,
            omega_p: 1.5,
            omega_g: 1.5,
            n_particles: 30,
            n_iterations: 50,
            n_reevaluations: 16,
            seed: 0,
            per_dimension_random: false,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("omega", self.omega), ("omega_p", self.omega_p), ("omega_g", self.omega_g)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!("{name} = {w} must be >= 0")));
            }
        }
        if self.n_particles == 0 || self.n_iterations == 0 {
            return Err(Error::Config("need at least one particle and one iteration".into()));
        }
        if self.n_reevaluations < 2 {
            return Err(Error::Config("n_reevaluations must be >= 2".into()));
        }
        Ok(())
    }

    /// Seed of re-evaluation `j` in iteration `k`; shared by all particles.
    pub fn evaluation_seed(&self, iteration: usize, j: usize) -> u64 {
        self.seed
            .wrapping_mul(1_000_003)
            .wrapping_add((iteration * self.n_reevaluations + j) as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub position: Position,
    pub velocity: Position,
    pub best_position: Position,
    pub best_cost: f64,
}

impl Particle {
    pub fn at_rest(position: Position) -> Self {
        Self {
            position,
            velocity: [0.0; DIMS],
            best_position: position,
            best_cost: f64::INFINITY,
        }
    }
}

/// `omega * v + omega_p * r1 * (p_best - p) + omega_g * r2 * (g_best - p)`
/// with explicit random weights.
pub fn velocity_update_with(
    p: &Particle,
    global_best: &Position,
    cfg: &PsoConfig,
    r1: &Position,
    r2: &Position,
) -> Position {
    let mut v = [0.0; DIMS];
    for d in 0..DIMS {
        v[d] = cfg.omega * p.velocity[d]
            + cfg.omega_p * r1[d] * (p.best_position[d] - p.position[d])
            + cfg.omega_g * r2[d] * (global_best[d] - p.position[d]);
    }
    v
}

pub fn velocity_update<R: Rng + ?Sized>(
    p: &Particle,
    global_best: &Position,
    cfg: &PsoConfig,
    rng: &mut R,
) -> Position {
    let (r1, r2) = if cfg.per_dimension_random {
        let mut r1 = [0.0; DIMS];
        let mut r2 = [0.0; DIMS];
        for d in 0..DIMS {
            r1[d] = rng.random();
            r2[d] = rng.random();
        }
        (r1, r2)
    } else {
        let a: f64 = rng.random();
        let b: f64 = rng.random();
        ([a; DIMS], [b; DIMS])
    };
    velocity_update_with(p, global_best, cfg, &r1, &r2)
}

pub fn position_update(p: &Particle, v_new: &Position, bounds: &SearchBounds) -> Position {
    let mut next = p.position;
    for d in 0..DIMS {
        next[d] += v_new[d];
    }
    bounds.clamp(&next)
}

/// One particle in one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub particle: usize,
    /// Particle cost this iteration.
    pub cost: f64,
    /// Personal best after this iteration.
    pub personal_best: f64,
    /// Global best after this iteration.
    pub global_best: f64,
    pub position: Position,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoOutcome {
    pub best_position: Position,
    pub best_cost: f64,
    pub history: Vec<HistoryRow>,
    pub particles: Vec<Particle>,
}

impl PsoOutcome {
    /// Global best after each iteration.
    pub fn global_best_history(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for row in &self.history {
            if out.len() <= row.iteration {
                out.push(row.global_best);
            }
        }
        out
    }
}

/// Minimizes `objective(position, seed)` aggregated with [`particle_cost`].
///
/// Particles start at rest, uniformly inside `bounds`; particle 0 starts at
/// `p0` when given. Evaluations run in parallel and are reduced in
/// `(particle, evaluation)` order, so the outcome depends only on `cfg.seed`.
pub fn optimize<F>(
    objective: F,
    bounds: &SearchBounds,
    cfg: &PsoConfig,
    p0: Option<Position>,
) -> Result<PsoOutcome>
where
    F: Fn(&Position, u64) -> Result<f64> + Sync,
{
    bounds.validate()?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut particles: Vec<Particle> = (0..cfg.n_particles)
        .map(|i| match (i, p0) {
            (0, Some(p)) => Particle::at_rest(bounds.clamp(&p)),
            _ => Particle::at_rest(bounds.sample(&mut rng)),
        })
        .collect();

    let mut best_position = particles[0].position;
    let mut best_cost = f64::INFINITY;
    let mut history = Vec::with_capacity(cfg.n_particles * cfg.n_iterations);
    let ne = cfg.n_reevaluations;

    for k in 0..cfg.n_iterations {
        let evals: Vec<f64> = (0..particles.len() * ne)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / ne, idx % ne);
                objective(&particles[i].position, cfg.evaluation_seed(k, j))
            })
            .collect::<Result<_>>()?;

        let costs: Vec<f64> = evals
            .chunks(ne)
            .map(particle_cost)
            .collect::<Result<_>>()?;
        for (p, &c) in particles.iter_mut().zip(&costs) {
            if c < p.best_cost {
                p.best_cost = c;
                p.best_position = p.position;
            }
            if c < best_cost {
                best_cost = c;
                best_position = p.position;
            }
        }
        for (i, (p, &c)) in particles.iter().zip(&costs).enumerate() {
            history.push(HistoryRow {
                iteration: k,
                particle: i,
                cost: c,
                personal_best: p.best_cost,
                global_best: best_cost,
                position: p.position,
            });
        }

        if k + 1 < cfg.n_iterations {
            for p in particles.iter_mut() {
                let v = velocity_update(p, &best_position, cfg, &mut rng);
                p.position = position_update(p, &v, bounds);
                p.velocity = v;
            }
        }
    }

    Ok(PsoOutcome {
        best_position,
        best_cost,
        history,
        particles,
    })
}

/// Writes `position` into the five tunable fields of `base`.
pub fn apply_position(base: &SimConfig, p: &Position) -> SimConfig {
    SimConfig {
        gamma0_ms: p[0],
        gamma_ms: p[1],
        tau_ms: p[2],
        theta_c_mm: p[3],
        theta_o: p[THETA_O].round().max(0.0) as u64,
        ..base.clone()
    }
}

pub fn position_of(cfg: &SimConfig) -> Position {
    [
        cfg.gamma0_ms,
        cfg.gamma_ms,
        cfg.tau_ms,
        cfg.theta_c_mm,
        cfg.theta_o as f64,
    ]
}

/// Evaluation cost of one simulated trial at `p` on pattern and robot seed `seed`.
pub fn swarm_objective(base: &SimConfig, p: &Position, seed: u64) -> Result<f64> {
    let cfg = apply_position(base, p);
    let result = run_trial(&cfg, seed, seed)?;
    evaluation_cost(&trial_robot_costs(&result, cfg.t_end_ms), cfg.n_robots)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaRow {
    pub eta: f64,
    pub runs: usize,
    pub decision_time_s: Summary,
    pub accuracy: Summary,
}

/// Runs the same seeds under soft feedback for every candidate `eta`.
/// Seed `s` is used as both pattern and robot seed.
pub fn sweep_eta(candidates: &[f64], base: &SimConfig, seeds: &[u64]) -> Result<Vec<EtaRow>> {
    if candidates.is_empty() {
        return Err(Error::Config("no eta candidates".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("no seeds".into()));
    }
    candidates
        .iter()
        .map(|&eta| {
            let cfg = base.with_strategy(StrategyKind::soft(eta)?);
            let results: Vec<TrialResult> = seeds
                .par_iter()
                .map(|&s| run_trial(&cfg, s, s))
                .collect::<Result<_>>()?;
            let times: Vec<f64> = results.iter().map(|r| r.decision_time_ms / 1000.0).collect();
            let acc: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
            Ok(EtaRow {
                eta,
                runs: results.len(),
                decision_time_s: Summary::of(&times),
                accuracy: Summary::of(&acc),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn robot_cost_examples() {
        let nv = Decision::MajorityNonVibrating;
        let v = Decision::MajorityVibrating;
        assert_eq!(robot_cost(nv, 1000.0, 0.48, 0.48, nv, 1000.0), 1.0);
        assert_eq!(robot_cost(v, 10.0, 0.48, 0.48, nv, 1000.0), 5.0);
        let c = robot_cost(Decision::Undecided, 10.0, 0.52, 0.48, nv, 1000.0);
        assert!((c - 2.0).abs() < 1e-12);
    }

    #[test]
    fn evaluation_and_particle_cost_examples() {
        assert_eq!(evaluation_cost(&[1.0; 5], 5).unwrap(), 5.0);
        assert_eq!(evaluation_cost(&[0.5, 1.0, 2.0, 5.0, 1.5], 5).unwrap(), 10.0);
        assert_eq!(evaluation_cost(&[5.0; 5], 5).unwrap(), 25.0);
        assert!(evaluation_cost(&[1.0; 4], 5).is_err());
        assert_eq!(particle_cost(&[3.25; 16]).unwrap(), 3.25);
        assert!((particle_cost(&[0.0, 2.0]).unwrap() - 2.1).abs() < 1e-15);
        let c = particle_cost(&[5.0, 5.0, 5.0, 5.0, 7.0, 7.0, 7.0, 7.0]).unwrap();
        assert!((c - 7.1).abs() < 1e-15);
        assert!(particle_cost(&[1.0]).is_err());
    }

    #[test]
    fn velocity_examples() {
        let cfg = PsoConfig::default();
        let mut p = Particle::at_rest([1.0, 2.0, 3.0, 4.0, 5.0]);
        let ones = [1.0; DIMS];
        assert_eq!(velocity_update_with(&p, &p.position, &cfg, &ones, &ones), [0.0; DIMS]);

        p.best_position = [2.0, 2.0, 3.0, 4.0, 5.0];
        let g = [1.0, 3.0, 3.0, 4.0, 5.0];
        assert_eq!(
            velocity_update_with(&p, &g, &cfg, &ones, &ones),
            [1.5, 1.5, 0.0, 0.0, 0.0]
        );

        let mut q = Particle::at_rest([1.0; DIMS]);
        q.velocity = [2.0, -4.0, 0.0, 1.0, 8.0];
        let v = velocity_update_with(&q, &q.position, &cfg, &ones, &ones);
        assert_eq!(v, [1.5, -3.0, 0.0, 0.75, 6.0]);
    }

    #[test]
    fn position_examples() {
        let b = SearchBounds::default();
        let p = Particle::at_rest([15000.0, 100.0, 2000.0, 60.0, 85.0]);
        let next = position_update(&p, &[10.0, 0.0, 0.0, 0.0, 0.4], &b);
        assert_eq!(next[0], 15000.0);
        assert_eq!(next[THETA_O], 85.0);
        assert_eq!(position_update(&p, &[0.0; DIMS], &b), p.position);
        let next = position_update(&p, &[0.0, -500.0, 0.0, 0.0, -100.0], &b);
        assert_eq!((next[1], next[THETA_O]), (0.0, 50.0));
    }

    #[test]
    fn zero_weights_freeze_positions() {
        let cfg = PsoConfig {
            omega_p: 0.0,
            omega_g: 0.0,
            n_particles: 6,
            n_iterations: 5,
            n_reevaluations: 2,
            ..PsoConfig::default()
        };
        let out = optimize(|p, _| Ok(p[0]), &SearchBounds::default(), &cfg, None).unwrap();
        for k in 1..5 {
            for i in 0..6 {
                assert_eq!(out.history[k * 6 + i].position, out.history[i].position);
            }
        }
    }

    #[test]
    fn constant_objective() {
        let cfg = PsoConfig {
            n_particles: 4,
            n_iterations: 3,
            n_reevaluations: 2,
            ..PsoConfig::default()
        };
        let out = optimize(|_, _| Ok(7.0), &SearchBounds::default(), &cfg, Some(P0)).unwrap();
        assert_eq!(out.global_best_history(), vec![7.0; 3]);
        // ties keep the incumbent
        assert_eq!(out.best_position, P0);
    }

    #[test]
    fn noisy_objective_is_order_independent() {
        let cfg = PsoConfig {
            n_particles: 8,
            n_iterations: 6,
            n_reevaluations: 4,
            seed: 42,
            ..PsoConfig::default()
        };
        let f = |p: &Position, seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(p.iter().sum::<f64>() / 1e4 + rng.random::<f64>())
        };
        let a = optimize(f, &SearchBounds::default(), &cfg, None).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool
            .install(|| optimize(f, &SearchBounds::default(), &cfg, None))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn p0_evaluates_on_the_simulator() {
        let base = SimConfig {
            t_end_ms: 30_000.0,
            strategy: StrategyKind::NoFeedback,
            ..SimConfig::default()
        };
        let c = swarm_objective(&base, &P0, 3).unwrap();
        // undecided robots cost at least 1 each
        assert!((5.0..=25.0 * 5.0).contains(&c), "{c}");
    }

    proptest! {
        #[test]
        fn particle_cost_at_least_mean(v in proptest::collection::vec(0.0f64..100.0, 2..20)) {
            let (mu, _) = mean_std(&v);
            let c = particle_cost(&v).unwrap();
            prop_assert!(c >= mu - 1e-12);
            let all_equal = v.iter().all(|&x| x == v[0]);
            if !all_equal {
                prop_assert!(c > mu);
            }
        }

        #[test]
        fn robot_cost_shape(est in 0.01f64..0.99, truth in 0.0f64..1.0, t_end in 1.0f64..1e7) {
            let nv = Decision::MajorityNonVibrating;
            let v = Decision::MajorityVibrating;
            let mut prev = robot_cost(nv, 0.0, est, truth, nv, t_end);
            for k in 1..=100 {
                let t = t_end * k as f64 / 100.0;
                let c = robot_cost(nv, t, est, truth, nv, t_end);
                prop_assert!(c >= prev);
                prop_assert!(c - prev <= (1.0 + 1.0 / ONE_TILE_ERROR) / 100.0 + 1e-9);
                prev = c;
                prop_assert_eq!(robot_cost(v, t, est, truth, nv, t_end), robot_cost(v, 0.0, est, truth, nv, t_end));
                prop_assert_eq!(
                    robot_cost(Decision::Undecided, t, est, truth, nv, t_end),
                    robot_cost(Decision::Undecided, 0.0, est, truth, nv, t_end)
                );
            }
        }

        #[test]
        fn clamp_respects_bounds(p in proptest::array::uniform5(-1e5f64..1e5)) {
            let b = SearchBounds::default();
            let c = b.clamp(&p);
            prop_assert!(b.contains(&c));
            prop_assert_eq!(c[THETA_O], c[THETA_O].round());
        }
    }
}
