//! Policy shaping: combining the learner's policy with a frozen advisor.
//!
//! Transfer happens in two places. At acting time, actions are drawn from
//! the normalized elementwise product of the actor's distribution and the
//! advisor's. At learning time, that same product enters the actor's update
//! target with weight `b = (1 - c) * tl`.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::approximator::{Activation, Network};
use crate::bdpi::Agent;
use crate::error::{contract, Error, Result};

/// Allowed deviation of a distribution's total mass from 1.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// Below this dot product the two policies are treated as disjoint.
pub const MIX_DOT_FLOOR: f64 = 1e-12;

/// Weight of the critics' greedy policy in the learning-time transfer target.
pub const GREEDY_WEIGHT: f64 = 0.05;

/// A probability vector over actions.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution(Vec<f64>);

impl DiscreteDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(contract("a distribution needs at least one action"));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(contract(format!("probability {p} outside [0, 1]")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(contract(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self(probs))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// All mass on `action`.
    pub fn point(n: usize, action: usize) -> Self {
        let mut p = vec![0.0; n];
        p[action] = 1.0;
        Self(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// Inverse-CDF sampling. Never returns an action of probability zero.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut cumulative = 0.0;
        let mut last_positive = 0;
        for (k, &p) in self.0.iter().enumerate() {
            if p > 0.0 {
                cumulative += p;
                last_positive = k;
                if u < cumulative {
                    return k;
                }
            }
        }
        last_positive
    }
}

fn same_length(a: &DiscreteDistribution, b: &DiscreteDistribution) -> Result<()> {
    if a.len() != b.len() {
        return Err(contract(format!(
            "distribution lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Normalized elementwise product `pi * source / <pi, source>`.
///
/// When the supports are disjoint (dot product below [`MIX_DOT_FLOOR`]) the
/// learner's own policy is returned unchanged.
pub fn mix(
    pi: &DiscreteDistribution,
    source: &DiscreteDistribution,
) -> Result<DiscreteDistribution> {
    same_length(pi, source)?;
    let product: Vec<f64> = pi.0.iter().zip(&source.0).map(|(a, b)| a * b).collect();
    let dot: f64 = product.iter().sum();
    if dot < MIX_DOT_FLOOR {
        return Ok(pi.clone());
    }
    Ok(DiscreteDistribution(
        product.into_iter().map(|p| (p / dot).min(1.0)).collect(),
    ))
}

/// Weights of the learning-time transfer target
/// `a * pi + b * mix(pi, source) + c * greedy`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransferCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

pub fn coefficients(tl: f64) -> Result<TransferCoefficients> {
    if !(0.0..=1.0).contains(&tl) {
        return Err(contract(format!(
            "transfer weight tl = {tl} outside [0, 1]"
        )));
    }
    let c = GREEDY_WEIGHT;
    let b = (1.0 - c) * tl;
    Ok(TransferCoefficients {
        a: 1.0 - b - c,
        b,
        c,
    })
}

/// Learning-time transfer actor target. With `tl = 0` this is exactly the
/// plain actor target with step `0.05`.
pub fn transfer_actor_target(
    pi: &DiscreteDistribution,
    source: &DiscreteDistribution,
    greedy: &DiscreteDistribution,
    tl: f64,
) -> Result<DiscreteDistribution> {
    let k = coefficients(tl)?;
    blend(&k, pi, source, greedy)
}

pub(crate) fn blend(
    k: &TransferCoefficients,
    pi: &DiscreteDistribution,
    source: &DiscreteDistribution,
    greedy: &DiscreteDistribution,
) -> Result<DiscreteDistribution> {
    same_length(pi, greedy)?;
    let mixed = mix(pi, source)?;
    let probs =
        pi.0.iter()
            .zip(&mixed.0)
            .zip(&greedy.0)
            .map(|((p, m), g)| (k.a * p + k.b * m + k.c * g).clamp(0.0, 1.0))
            .collect();
    Ok(DiscreteDistribution(probs))
}

/// A frozen source policy, consulted through the advisor observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Advisor {
    network: Network,
}

impl Advisor {
    pub fn new(network: Network) -> Result<Self> {
        if network.output_activation() != Activation::Softmax {
            return Err(Error::Config(
                "an advisor network must end in a softmax layer".into(),
            ));
        }
        Ok(Self { network })
    }

    /// Loads an advisor from a network checkpoint.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(Network::load(path)?)
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn observation_width(&self) -> usize {
        self.network.input_width()
    }

    pub fn action_count(&self) -> usize {
        self.network.output_width()
    }

    pub fn policy(&self, observation: &[f64]) -> Result<DiscreteDistribution> {
        DiscreteDistribution::new(self.network.forward(observation)?)
    }

    pub fn policy_batch(&self, observations: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.network.forward_batch(observations)
    }
}

impl Agent {
    /// Samples an action for the current state. With acting-time transfer
    /// enabled, the draw comes from `mix(pi(s), advisor(advisor_obs))`.
    pub fn act(&mut self, primary: &[f64], advisor_obs: &[f64]) -> Result<usize> {
        let distribution = self.acting_distribution(primary, advisor_obs)?;
        Ok(distribution.sample(self.rng_mut()))
    }

    /// The distribution [`Agent::act`] samples from.
    pub fn acting_distribution(
        &self,
        primary: &[f64],
        advisor_obs: &[f64],
    ) -> Result<DiscreteDistribution> {
        let pi = self.policy(primary)?;
        if !self.config().acting_transfer {
            return Ok(pi);
        }
        let advisor = self.advisor().ok_or_else(|| {
            Error::Config("acting-time transfer is enabled but no advisor is loaded".into())
        })?;
        mix(&pi, &advisor.policy(advisor_obs)?)
    }
}
