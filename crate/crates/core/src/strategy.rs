//! Information-sharing strategies: what bit a robot broadcasts after sampling.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bayes::{Belief, Decision, Observation};
use crate::error::{Error, Result};

/// How a robot shares information with the swarm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategyKind {
    /// Broadcast the latest own observation.
    NoFeedback,
    /// Broadcast the final decision once made, the latest observation before.
    PositiveFeedback,
    /// Broadcast a Bernoulli bit blending observation and belief.
    SoftFeedback { eta: f64 },
}

impl StrategyKind {
    pub fn soft(eta: f64) -> Result<Self> {
        if eta.is_finite() && eta >= 0.0 {
            Ok(StrategyKind::SoftFeedback { eta })
        } else {
            Err(Error::Config(format!("soft-feedback eta = {eta} must be >= 0")))
        }
    }

    pub fn is_soft(&self) -> bool {
        matches!(self, StrategyKind::SoftFeedback { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::NoFeedback => "no-feedback",
            StrategyKind::PositiveFeedback => "positive-feedback",
            StrategyKind::SoftFeedback { .. } => "soft-feedback",
        }
    }

    pub fn eta(&self) -> Option<f64> {
        match *self {
            StrategyKind::SoftFeedback { eta } => Some(eta),
            _ => None,
        }
    }

    /// Parses a strategy name, attaching `eta` when the name is `soft-feedback`.
    pub fn parse_with_eta(name: &str, eta: f64) -> Result<Self> {
        match name {
            "no-feedback" => Ok(StrategyKind::NoFeedback),
            "positive-feedback" => Ok(StrategyKind::PositiveFeedback),
            "soft-feedback" => StrategyKind::soft(eta),
            other => Err(Error::Config(format!(
                "unknown strategy `{other}` (expected no-feedback, positive-feedback or soft-feedback)"
            ))),
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyKind::SoftFeedback { eta } => write!(f, "soft-feedback(eta={eta})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Strategy names without parameters, as they appear on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyName {
    NoFeedback,
    PositiveFeedback,
    SoftFeedback,
}

impl StrategyName {
    pub fn with_eta(self, eta: f64) -> Result<StrategyKind> {
        match self {
            StrategyName::NoFeedback => Ok(StrategyKind::NoFeedback),
            StrategyName::PositiveFeedback => Ok(StrategyKind::PositiveFeedback),
            StrategyName::SoftFeedback => StrategyKind::soft(eta),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyName::NoFeedback => "no-feedback",
            StrategyName::PositiveFeedback => "positive-feedback",
            StrategyName::SoftFeedback => "soft-feedback",
        }
    }
}

impl FromStr for StrategyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no-feedback" => Ok(StrategyName::NoFeedback),
            "positive-feedback" => Ok(StrategyName::PositiveFeedback),
            "soft-feedback" => Ok(StrategyName::SoftFeedback),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

impl fmt::Display for StrategyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<StrategyKind> for StrategyName {
    fn from(kind: StrategyKind) -> Self {
        match kind {
            StrategyKind::NoFeedback => StrategyName::NoFeedback,
            StrategyKind::PositiveFeedback => StrategyName::PositiveFeedback,
            StrategyKind::SoftFeedback { .. } => StrategyName::SoftFeedback,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrategySpec {
    kind: StrategyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
}

/// Serialized as `{ kind = "soft-feedback", eta = 1000.0 }`.
impl Serialize for StrategyKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StrategySpec {
            kind: (*self).into(),
            eta: self.eta(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for StrategyKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = StrategySpec::deserialize(d)?;
        match (spec.kind, spec.eta) {
            (StrategyName::SoftFeedback, None) => Err(serde::de::Error::custom(
                "soft-feedback requires `eta`",
            )),
            (StrategyName::SoftFeedback, Some(eta)) => {
                StrategyKind::soft(eta).map_err(serde::de::Error::custom)
            }
            (_, Some(_)) => Err(serde::de::Error::custom(
                "`eta` only applies to soft-feedback",
            )),
            (name, None) => name.with_eta(0.0).map_err(serde::de::Error::custom),
        }
    }
}

/// One robot's state at the moment it broadcasts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MessageContext {
    pub latest_observation: Observation,
    pub belief: Belief,
    /// Posterior variance.
    pub posterior_variance: f64,
    pub decision: Decision,
}

/// Weight given to the belief in a soft-feedback message:
/// `exp(-eta * gamma) * (0.5 - p)^2`.
///
/// The exponential grows toward one as the posterior variance `gamma`
/// shrinks; the squared term vanishes when the robot is undecided at `p = 0.5`.
pub fn delta(p: f64, gamma: f64, eta: f64) -> f64 {
    let d = 0.5 - p;
    (-eta * gamma).exp() * d * d
}

/// Probability that a soft-feedback message is 1: `d * (1 - p) + (1 - d) * o`.
pub fn message_probability(p: f64, o: Observation, d: f64) -> f64 {
    (d * (1.0 - p) + (1.0 - d) * o.as_f64()).clamp(0.0, 1.0)
}

/// The bit to broadcast after a sampling event.
///
/// Only soft feedback consumes randomness, and only from `rng`, the
/// broadcasting robot's own stream.
pub fn outgoing_message<R: Rng + ?Sized>(
    kind: StrategyKind,
    ctx: &MessageContext,
    rng: &mut R,
) -> Observation {
    match kind {
        StrategyKind::NoFeedback => ctx.latest_observation,
        StrategyKind::PositiveFeedback => ctx
            .decision
            .as_observation()
            .unwrap_or(ctx.latest_observation),
        StrategyKind::SoftFeedback { eta } => {
            let p = ctx.belief.value();
            let d = delta(p, ctx.posterior_variance, eta);
            let q = message_probability(p, ctx.latest_observation, d);
            // u in [0, 1): q = 1 always yields 1, q = 0 always yields 0.
            let u: f64 = rng.random();
            Observation::from_bit(u < q)
        }
    }
}
