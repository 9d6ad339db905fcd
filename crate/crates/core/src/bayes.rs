//! Beta-Bernoulli model of the unknown fill ratio.
//!
//! Every robot keeps a `Beta(alpha, beta)` posterior over the fraction of
//! vibrating tiles, starting from the uniform prior `Beta(1, 1)`. Own floor
//! samples and bits received from peers are folded in with the same
//! conjugate update. The belief `p` is the posterior probability that the
//! fill ratio lies below one half; a robot commits once `p` (or `1 - p`)
//! clears the credibility threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::regularized_incomplete_beta;

/// A binary floor observation (or a received message bit).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observation {
    /// Non-vibrating / white tile.
    Zero,
    /// Vibrating / black tile.
    One,
}

impl Observation {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Observation::One
        } else {
            Observation::Zero
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Observation::Zero => 0,
            Observation::One => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.bit())
    }
}

/// Conjugate posterior over the fill ratio.
///
/// Counts are stored as reals; every update in this crate adds exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPosterior {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for BetaPosterior {
    fn default() -> Self {
        Self::uniform()
    }
}

impl BetaPosterior {
    /// The `Beta(1, 1)` prior.
    pub const fn uniform() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }

    /// Returns `None` unless both counts are finite and at least one.
    pub fn new(alpha: f64, beta: f64) -> Option<Self> {
        if alpha.is_finite() && beta.is_finite() && alpha >= 1.0 && beta >= 1.0 {
            Some(Self { alpha, beta })
        } else {
            None
        }
    }

    /// `Beta(alpha + o, beta + 1 - o)`.
    #[must_use]
    pub fn update(self, o: Observation) -> Self {
        match o {
            Observation::One => Self {
                alpha: self.alpha + 1.0,
                ..self
            },
            Observation::Zero => Self {
                beta: self.beta + 1.0,
                ..self
            },
        }
    }

    /// Number of observations and messages integrated since the prior.
    pub fn integrated(&self) -> f64 {
        self.alpha + self.beta - 2.0
    }

    /// `P(f < 0.5)`, the posterior CDF at one half.
    pub fn belief(&self) -> Belief {
        let p = regularized_incomplete_beta(self.alpha, self.beta, 0.5);
        Belief(p.clamp(0.0, 1.0))
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }

    /// Posterior mean `alpha / (alpha + beta)`, the robot's fill-ratio estimate.
    pub fn mean_estimate(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Free-function form of [`BetaPosterior::update`].
pub fn update_posterior(post: BetaPosterior, o: Observation) -> BetaPosterior {
    post.update(o)
}

/// Probability that the fill ratio is below one half.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Belief(pub f64);

impl Belief {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// A robot's final classification.
///
/// Serialized as the integers `-1`, `0`, `1` used by the decision rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Decision {
    #[default]
    Undecided,
    /// Fill ratio below one half (`d_f = 0`).
    MajorityNonVibrating,
    /// Fill ratio above one half (`d_f = 1`).
    MajorityVibrating,
}

impl Decision {
    pub fn code(self) -> i8 {
        match self {
            Decision::Undecided => -1,
            Decision::MajorityNonVibrating => 0,
            Decision::MajorityVibrating => 1,
        }
    }

    pub fn from_code(code: i8) -> Option<Self> {
        match code {
            -1 => Some(Decision::Undecided),
            0 => Some(Decision::MajorityNonVibrating),
            1 => Some(Decision::MajorityVibrating),
            _ => None,
        }
    }

    pub fn is_decided(self) -> bool {
        self != Decision::Undecided
    }

    /// The bit a positive-feedback robot broadcasts for this decision.
    pub fn as_observation(self) -> Option<Observation> {
        match self {
            Decision::Undecided => None,
            Decision::MajorityNonVibrating => Some(Observation::Zero),
            Decision::MajorityVibrating => Some(Observation::One),
        }
    }

    /// The correct decision for a given true fill ratio.
    pub fn for_fill_ratio(f: f64) -> Self {
        if f < 0.5 {
            Decision::MajorityNonVibrating
        } else if f > 0.5 {
            Decision::MajorityVibrating
        } else {
            Decision::Undecided
        }
    }
}

impl Serialize for Decision {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.code())
    }
}

impl<'de> Deserialize<'de> for Decision {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let code = i8::deserialize(d)?;
        Decision::from_code(code)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid decision code {code}")))
    }
}

/// Rejects credibility thresholds outside the open interval `(0.5, 1)`.
pub fn validate_credibility(p_c: f64) -> Result<()> {
    if p_c > 0.5 && p_c < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "credibility threshold p_c = {p_c} must lie in (0.5, 1)"
        )))
    }
}

/// Credibility-threshold decision rule.
///
/// Nothing happens until more than `theta_o` own samples have been taken.
/// Under non-soft strategies a decision, once made, is final; under soft
/// feedback it is re-evaluated every time and may switch sides.
pub fn try_decide(
    belief: Belief,
    observation_count: u64,
    theta_o: u64,
    p_c: f64,
    current: Decision,
    strategy_is_soft: bool,
) -> Decision {
    if observation_count <= theta_o {
        return current;
    }
    if !strategy_is_soft && current.is_decided() {
        return current;
    }
    let p = belief.value();
    if p > p_c {
        Decision::MajorityNonVibrating
    } else if 1.0 - p > p_c {
        Decision::MajorityVibrating
    } else {
        current
    }
}
