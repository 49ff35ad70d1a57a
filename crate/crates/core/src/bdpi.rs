//! Bootstrapped Dual Policy Iteration.
//!
//! The learner keeps one actor and `n_critics` critics. Each critic holds two
//! Q-networks; every training iteration it swaps their roles and regresses
//! the new `qa` toward the clipped target
//!
//! ```text
//! a*   = argmax_a' qa(s', a')
//! V    = min(qa(s', a*), qb(s', a*))          (0 on terminal transitions)
//! q(s, a) <- q(s, a) + alpha (r + gamma V - q(s, a))
//! ```
//!
//! Once all critics are trained, the actor is pulled, critic by critic,
//! toward each critic's greedy policy: `pi(s) <- (1 - lambda) pi(s) +
//! lambda greedy(qa(s))` for every state of that critic's batch.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::{Activation, Loss, Network, TrainSpec};
use crate::error::{contract, Error, Result};
use crate::mdp::{Experience, ReplayBuffer};
use crate::transfer::{self, Advisor, DiscreteDistribution};

/// Every hyperparameter of the learner. `Default` holds the reference
/// values (16 critics, 256-experience batches, a 50 000-experience buffer,
/// `alpha = 0.2`, `lambda = 0.05`, 20 training epochs, 100 hidden units).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub n_critics: usize,
    pub n_train_iters: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub critic_epochs: usize,
    pub actor_epochs: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden_units: usize,
    pub tl: f64,
    pub acting_transfer: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            alpha: 0.2,
            lambda: 0.05,
            n_critics: 16,
            n_train_iters: 1,
            batch_size: 256,
            buffer_capacity: 50_000,
            critic_epochs: 20,
            actor_epochs: 20,
            actor_lr: 1e-4,
            critic_lr: 1e-2,
            hidden_units: 100,
            tl: 0.0,
            acting_transfer: false,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(0.0..1.0).contains(&self.gamma) {
            return fail(format!("gamma = {} must lie in [0, 1)", self.gamma));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return fail(format!("alpha = {} must lie in (0, 1]", self.alpha));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return fail(format!("lambda = {} must lie in (0, 1]", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.tl) {
            return fail(format!("tl = {} must lie in [0, 1]", self.tl));
        }
        for (name, v) in [
            ("n_critics", self.n_critics),
            ("n_train_iters", self.n_train_iters),
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("critic_epochs", self.critic_epochs),
            ("actor_epochs", self.actor_epochs),
            ("hidden_units", self.hidden_units),
        ] {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        for (name, v) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} = {v} must be positive"));
            }
        }
        Ok(())
    }
}

/// Argmax with ties split uniformly.
pub fn greedy_distribution(q: &[f64]) -> Result<DiscreteDistribution> {
    if q.is_empty() {
        return Err(contract("greedy distribution of an empty Q-vector"));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(contract("Q-values must be finite"));
    }
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties = q.iter().filter(|&&v| v == max).count() as f64;
    DiscreteDistribution::new(
        q.iter()
            .map(|&v| if v == max { 1.0 / ties } else { 0.0 })
            .collect(),
    )
}

/// `(1 - lambda) pi + lambda greedy`.
pub fn actor_target(
    pi: &DiscreteDistribution,
    greedy: &DiscreteDistribution,
    lambda: f64,
) -> Result<DiscreteDistribution> {
    if pi.len() != greedy.len() {
        return Err(contract("policy and greedy distribution lengths differ"));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(contract(format!("lambda = {lambda} outside [0, 1]")));
    }
    DiscreteDistribution::new(
        pi.probs()
            .iter()
            .zip(greedy.probs())
            .map(|(p, g)| ((1.0 - lambda) * p + lambda * g).clamp(0.0, 1.0))
            .collect(),
    )
}

/// Index of the largest value; the lowest index wins ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Rewrites `row` (which holds `qa(s)`) in place at `action`.
#[allow(clippy::too_many_arguments)]
fn clipped_update(
    row: &mut [f64],
    qa_next: &[f64],
    qb_next: &[f64],
    action: usize,
    reward: f64,
    terminal: bool,
    gamma: f64,
    alpha: f64,
) {
    let value = if terminal {
        0.0
    } else {
        let best = argmax(qa_next);
        qa_next[best].min(qb_next[best])
    };
    let current = row[action];
    row[action] = current + alpha * (reward + gamma * value - current);
}

/// One critic's two Q-networks. The swap only flips which of the two plays
/// the `qa` role.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticPair {
    nets: [Network; 2],
    swapped: bool,
}

impl CriticPair {
    pub fn new(qa: Network, qb: Network) -> Result<Self> {
        let shape = |n: &Network| -> Vec<(usize, usize, bool)> {
            n.layers()
                .iter()
                .map(|l| (l.inputs(), l.outputs(), l.bias().is_some()))
                .collect()
        };
        if shape(&qa) != shape(&qb) {
            return Err(contract(
                "the two Q-networks of a critic must share a shape",
            ));
        }
        Ok(Self {
            nets: [qa, qb],
            swapped: false,
        })
    }

    pub fn qa(&self) -> &Network {
        &self.nets[self.swapped as usize]
    }

    pub fn qb(&self) -> &Network {
        &self.nets[!self.swapped as usize]
    }

    pub fn qa_mut(&mut self) -> &mut Network {
        &mut self.nets[self.swapped as usize]
    }

    pub fn qb_mut(&mut self) -> &mut Network {
        &mut self.nets[!self.swapped as usize]
    }

    pub fn swap(&mut self) {
        self.swapped = !self.swapped;
    }

    pub fn is_swapped(&self) -> bool {
        self.swapped
    }

    pub fn action_count(&self) -> usize {
        self.nets[0].output_width()
    }
}

/// The clipped target Q-row for one experience: `qa(s)` with the entry of
/// the taken action moved by `alpha` toward `r + gamma V(s')`.
pub fn critic_target(
    critic: &CriticPair,
    e: &Experience,
    gamma: f64,
    alpha: f64,
) -> Result<Vec<f64>> {
    if e.action >= critic.action_count() {
        return Err(contract(format!("action {} out of range", e.action)));
    }
    let mut row = critic.qa().forward(&e.state)?;
    let qa_next = critic.qa().forward(&e.next_state)?;
    let qb_next = critic.qb().forward(&e.next_state)?;
    clipped_update(
        &mut row, &qa_next, &qb_next, e.action, e.reward, e.terminal, gamma, alpha,
    );
    Ok(row)
}

fn stack<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>, width: usize) -> Result<Array2<f64>> {
    let n = rows.len();
    let mut flat = Vec::with_capacity(n * width);
    for row in rows {
        if row.len() != width {
            return Err(contract(format!(
                "row of width {} where {width} was expected",
                row.len()
            )));
        }
        flat.extend_from_slice(row);
    }
    Array2::from_shape_vec((n, width), flat).map_err(|e| contract(e.to_string()))
}

fn states(batch: &[Arc<Experience>], width: usize) -> Result<Array2<f64>> {
    stack(batch.iter().map(|e| e.state.as_slice()), width)
}

/// Clipped target rows for a whole batch, against the pair's current roles.
pub fn critic_targets(
    critic: &CriticPair,
    batch: &[Arc<Experience>],
    gamma: f64,
    alpha: f64,
) -> Result<Array2<f64>> {
    let width = critic.qa().input_width();
    let s = states(batch, width)?;
    let next = stack(batch.iter().map(|e| e.next_state.as_slice()), width)?;
    let mut targets = critic.qa().forward_batch(s.view())?;
    let qa_next = critic.qa().forward_batch(next.view())?;
    let qb_next = critic.qb().forward_batch(next.view())?;
    let actions = critic.action_count();
    for (k, e) in batch.iter().enumerate() {
        if e.action >= actions {
            return Err(contract(format!("action {} out of range", e.action)));
        }
        let mut row = targets.row_mut(k);
        let row = row.as_slice_mut().expect("standard layout");
        clipped_update(
            row,
            qa_next.row(k).as_slice().expect("standard layout"),
            qb_next.row(k).as_slice().expect("standard layout"),
            e.action,
            e.reward,
            e.terminal,
            gamma,
            alpha,
        );
    }
    Ok(targets)
}

/// Swaps the critic's roles, then regresses the new `qa` toward the clipped
/// targets with mean squared error. Returns the final regression loss.
pub fn train_critic(
    critic: &mut CriticPair,
    batch: &[Arc<Experience>],
    config: &AgentConfig,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(contract("cannot train a critic on an empty batch"));
    }
    critic.swap();
    let targets = critic_targets(critic, batch, config.gamma, config.alpha)?;
    let s = states(batch, critic.qa().input_width())?;
    let spec = TrainSpec::new(
        config.critic_lr,
        config.critic_epochs,
        Loss::MeanSquaredError,
    )?;
    critic.qa_mut().train(s.view(), targets.view(), &spec)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpochDiagnostics {
    /// Mean over critics of the final regression loss.
    pub critic_loss: f64,
    /// Mean L1 distance between the actor's policy and its targets, measured
    /// before each actor pass.
    pub actor_divergence: f64,
}

/// The BDPI learner.
#[derive(Debug)]
pub struct Agent {
    config: AgentConfig,
    actor: Network,
    critics: Vec<CriticPair>,
    buffer: Arc<ReplayBuffer>,
    advisor: Option<Advisor>,
    rng: ChaCha8Rng,
}

impl Agent {
    /// Fresh agent with `hidden_units`-wide single-hidden-layer networks.
    pub fn new(
        config: AgentConfig,
        observation_width: usize,
        action_count: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = [observation_width, config.hidden_units, action_count];
        let actor = Network::new(
            &widths,
            Activation::Rectifier,
            Activation::Softmax,
            &mut rng,
        )?;
        let critics = (0..config.n_critics)
            .map(|_| {
                let qa = Network::new(
                    &widths,
                    Activation::Rectifier,
                    Activation::Identity,
                    &mut rng,
                )?;
                let qb = Network::new(
                    &widths,
                    Activation::Rectifier,
                    Activation::Identity,
                    &mut rng,
                )?;
                CriticPair::new(qa, qb)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(config, actor, critics, seed)
    }

    /// Agent over caller-built networks.
    pub fn from_parts(
        config: AgentConfig,
        actor: Network,
        critics: Vec<CriticPair>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if actor.output_activation() != Activation::Softmax {
            return Err(Error::Config("the actor needs a softmax head".into()));
        }
        if critics.len() != config.n_critics {
            return Err(Error::Config(format!(
                "{} critics given but n_critics = {}",
                critics.len(),
                config.n_critics
            )));
        }
        for c in &critics {
            if c.qa().input_width() != actor.input_width()
                || c.action_count() != actor.output_width()
            {
                return Err(Error::Config("critic and actor widths disagree".into()));
            }
        }
        let buffer = Arc::new(ReplayBuffer::new(
            config.buffer_capacity,
            seed.wrapping_add(0x9e37_79b9_7f4a_7c15),
        )?);
        Ok(Self {
            config,
            actor,
            critics,
            buffer,
            advisor: None,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d),
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn actor(&self) -> &Network {
        &self.actor
    }

    pub fn critics(&self) -> &[CriticPair] {
        &self.critics
    }

    pub fn critics_mut(&mut self) -> &mut [CriticPair] {
        &mut self.critics
    }

    pub fn buffer(&self) -> &Arc<ReplayBuffer> {
        &self.buffer
    }

    pub fn advisor(&self) -> Option<&Advisor> {
        self.advisor.as_ref()
    }

    pub fn set_advisor(&mut self, advisor: Advisor) {
        self.advisor = Some(advisor);
    }

    pub(crate) fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn observation_width(&self) -> usize {
        self.actor.input_width()
    }

    pub fn action_count(&self) -> usize {
        self.actor.output_width()
    }

    /// The actor's distribution at `observation`.
    pub fn policy(&self, observation: &[f64]) -> Result<DiscreteDistribution> {
        DiscreteDistribution::new(self.actor.forward(observation)?)
    }

    /// One training epoch: every critic samples its own batch and is trained
    /// `n_train_iters` times on it; the actor is then moved toward each
    /// critic's greedy policy in turn.
    pub fn train_epoch(&mut self) -> Result<EpochDiagnostics> {
        if self.buffer.is_empty() {
            return Err(contract("train_epoch needs a non-empty replay buffer"));
        }
        let batches = (0..self.config.n_critics)
            .map(|_| self.buffer.sample(self.config.batch_size))
            .collect::<Result<Vec<_>>>()?;

        let mut critic_loss = 0.0;
        for (critic, batch) in self.critics.iter_mut().zip(&batches) {
            let mut loss = 0.0;
            for _ in 0..self.config.n_train_iters {
                loss = train_critic(critic, batch, &self.config)?;
            }
            critic_loss += loss;
        }

        let transfer = if self.config.tl > 0.0 {
            let advisor = self.advisor.as_ref().ok_or_else(|| {
                Error::Config("learning-time transfer (tl > 0) needs an advisor".into())
            })?;
            Some((advisor, transfer::coefficients(self.config.tl)?))
        } else {
            None
        };
        let spec = TrainSpec::new(
            self.config.actor_lr,
            self.config.actor_epochs,
            Loss::CrossEntropy,
        )?;
        let width = self.actor.input_width();
        let mut divergence = 0.0;
        for (critic, batch) in self.critics.iter().zip(&batches) {
            let s = states(batch, width)?;
            let pi = self.actor.forward_batch(s.view())?;
            let q = critic.qa().forward_batch(s.view())?;
            let source = match &transfer {
                Some((advisor, _)) => {
                    let obs = stack(
                        batch.iter().map(|e| e.advisor_state.as_slice()),
                        advisor.observation_width(),
                    )?;
                    Some(advisor.policy_batch(obs.view())?)
                }
                None => None,
            };
            let mut targets = Array2::zeros(pi.dim());
            let mut distance = 0.0;
            for k in 0..batch.len() {
                let pi_s = DiscreteDistribution::new(pi.row(k).to_vec())?;
                let greedy = greedy_distribution(q.row(k).as_slice().expect("standard layout"))?;
                let target = match (&transfer, &source) {
                    (Some((_, coeffs)), Some(source)) => {
                        let source_s = DiscreteDistribution::new(source.row(k).to_vec())?;
                        transfer::blend(coeffs, &pi_s, &source_s, &greedy)?
                    }
                    _ => actor_target(&pi_s, &greedy, self.config.lambda)?,
                };
                distance += pi_s.l1_distance(&target);
                targets.row_mut(k).assign(
                    &ArrayView2::from_shape((1, target.len()), target.probs())
                        .expect("row")
                        .row(0),
                );
            }
            divergence += distance / batch.len() as f64;
            self.actor.train(s.view(), targets.view(), &spec)?;
        }

        let n = self.config.n_critics as f64;
        Ok(EpochDiagnostics {
            critic_loss: critic_loss / n,
            actor_divergence: divergence / n,
        })
    }

    /// Writes `actor.net`, `critic-<i>-a.net`, `critic-<i>-b.net` (in their
    /// current roles) and a `manifest.toml` with the configuration.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.actor.save(dir.join("actor.net"))?;
        for (i, c) in self.critics.iter().enumerate() {
            c.qa().save(dir.join(format!("critic-{i}-a.net")))?;
            c.qb().save(dir.join(format!("critic-{i}-b.net")))?;
        }
        let manifest = toml::to_string(&self.config)
            .map_err(|e| Error::Config(format!("cannot encode manifest: {e}")))?;
        fs::write(dir.join("manifest.toml"), manifest)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>, seed: u64) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join("manifest.toml");
        let text = fs::read_to_string(&manifest_path)?;
        let config: AgentConfig = toml::from_str(&text).map_err(|e| Error::Checkpoint {
            path: manifest_path.clone(),
            reason: e.to_string(),
        })?;
        let actor = Network::load(dir.join("actor.net"))?;
        let critics = (0..config.n_critics)
            .map(|i| {
                CriticPair::new(
                    Network::load(dir.join(format!("critic-{i}-a.net")))?,
                    Network::load(dir.join(format!("critic-{i}-b.net")))?,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(config, actor, critics, seed)
    }
}
