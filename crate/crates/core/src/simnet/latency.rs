//! Seeded link-delay models. All samples are whole, strictly positive
//! microseconds.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::queue::Micros;
use crate::ids::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayDist {
    Fixed {
        us: Micros,
    },
    /// Inclusive integer range.
    Uniform {
        min_us: Micros,
        max_us: Micros,
    },
    /// Lognormal around `median_us`, truncated at `median_us · e^(4σ)` so every
    /// hop has a known bound.
    Lognormal {
        median_us: f64,
        sigma: f64,
    },
}

impl DelayDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Micros {
        let raw = match *self {
            DelayDist::Fixed { us } => us,
            DelayDist::Uniform { min_us, max_us } => rng.random_range(min_us..=max_us.max(min_us)),
            DelayDist::Lognormal { median_us, sigma } => {
                let d = LogNormal::new(median_us.ln(), sigma).expect("sigma checked by validate");
                d.sample(rng).min(self.bound() as f64).round() as Micros
            }
        };
        raw.max(1)
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DelayDist::Fixed { us } => us.max(1) as f64,
            DelayDist::Uniform { min_us, max_us } => (min_us + max_us.max(min_us)) as f64 / 2.0,
            DelayDist::Lognormal { median_us, sigma } => median_us * (sigma * sigma / 2.0).exp(),
        }
    }

    /// Largest delay this distribution can produce.
    pub fn bound(&self) -> Micros {
        match *self {
            DelayDist::Fixed { us } => us.max(1),
            DelayDist::Uniform { min_us, max_us } => max_us.max(min_us).max(1),
            DelayDist::Lognormal { median_us, sigma } => (median_us * (4.0 * sigma).exp()).ceil().max(1.0) as Micros,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            DelayDist::Uniform { min_us, max_us } if min_us > max_us => {
                Err(format!("uniform min_us {min_us} exceeds max_us {max_us}"))
            }
            DelayDist::Lognormal { median_us, sigma }
                if !(median_us.is_finite() && median_us > 0.0 && sigma.is_finite() && sigma >= 0.0) =>
            {
                Err(format!("lognormal needs median_us > 0 and sigma >= 0, got {median_us}, {sigma}"))
            }
            _ => Ok(()),
        }
    }
}

/// A delay override for one directed link. `from: null` is the client side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkOverride {
    pub from: Option<NodeId>,
    pub to: NodeId,
    pub delay: DelayDist,
}

/// Link delays. Client→node and node→node links share `default` unless a link
/// is overridden.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyModel {
    pub default: DelayDist,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<LinkOverride>,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel::uniform_ms(1, 10)
    }
}

impl LatencyModel {
    pub fn fixed_us(us: Micros) -> Self {
        LatencyModel { default: DelayDist::Fixed { us }, overrides: Vec::new() }
    }

    pub fn uniform_ms(min: u64, max: u64) -> Self {
        LatencyModel { default: DelayDist::Uniform { min_us: min * 1_000, max_us: max * 1_000 }, overrides: Vec::new() }
    }

    pub fn with_override(mut self, from: Option<NodeId>, to: NodeId, delay: DelayDist) -> Self {
        self.overrides.push(LinkOverride { from, to, delay });
        self
    }

    pub fn link(&self, from: Option<NodeId>, to: NodeId) -> &DelayDist {
        self.overrides.iter().rev().find(|o| o.from == from && o.to == to).map_or(&self.default, |o| &o.delay)
    }

    pub fn sample<R: Rng + ?Sized>(&self, from: Option<NodeId>, to: NodeId, rng: &mut R) -> Micros {
        self.link(from, to).sample(rng)
    }

    /// Mean of the default link delay.
    pub fn mean_us(&self) -> f64 {
        self.default.mean()
    }

    /// Bound on any single hop, overrides included.
    pub fn hop_bound_us(&self) -> Micros {
        self.overrides.iter().map(|o| o.delay.bound()).fold(self.default.bound(), Micros::max)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.default.validate()?;
        self.overrides.iter().try_for_each(|o| o.delay.validate())
    }
}
