//! Experiences, the shared replay buffer and the episode loop.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Result};

/// What the agent sees at one timestep: its own observation and the
/// side-channel observation consumed by an advisor policy.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub primary: Vec<f64>,
    pub advisor: Vec<f64>,
}

/// Result of one environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub observation: Observation,
    pub reward: f64,
    /// The episode reached a true terminal state (no bootstrapping).
    pub terminal: bool,
    /// The episode was cut by the step cap.
    pub truncated: bool,
}

impl Transition {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// A discrete-action environment.
///
/// `step` before the first `reset`, or after a step that ended the episode,
/// is a contract violation.
pub trait Environment {
    fn action_count(&self) -> usize;
    fn observation_width(&self) -> usize;
    fn advisor_width(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<Observation>;
    fn step(&mut self, action: usize) -> Result<Transition>;
}

/// One `(s, a, r, s')` transition together with the advisor's view of `s`
/// and `s'`.
#[derive(Clone, Debug, PartialEq)]
pub struct Experience {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    pub advisor_state: Vec<f64>,
    pub advisor_next_state: Vec<f64>,
}

impl Experience {
    pub fn from_step(before: &Observation, action: usize, after: &Transition) -> Self {
        Self {
            state: before.primary.clone(),
            action,
            reward: after.reward,
            next_state: after.observation.primary.clone(),
            terminal: after.terminal,
            advisor_state: before.advisor.clone(),
            advisor_next_state: after.observation.advisor.clone(),
        }
    }

    pub fn validate(&self, actions: usize, width: usize, advisor_width: usize) -> Result<()> {
        if self.action >= actions {
            return Err(contract(format!(
                "action {} out of range for {actions} actions",
                self.action
            )));
        }
        if !self.reward.is_finite() {
            return Err(contract("reward must be finite"));
        }
        if self.state.len() != width || self.next_state.len() != width {
            return Err(contract(format!(
                "observation width {}/{} does not match {width}",
                self.state.len(),
                self.next_state.len()
            )));
        }
        if self.advisor_state.len() != advisor_width
            || self.advisor_next_state.len() != advisor_width
        {
            return Err(contract(format!(
                "advisor observation width does not match {advisor_width}"
            )));
        }
        Ok(())
    }
}

/// Bounded FIFO experience store with uniform sampling with replacement.
///
/// `push` and `sample` each take the internal locks for their whole
/// duration, so one writer and several readers can share the buffer.
#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: RwLock<VecDeque<Arc<Experience>>>,
    rng: Mutex<ChaCha8Rng>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(contract("replay buffer capacity must be positive"));
        }
        Ok(Self {
            capacity,
            storage: RwLock::new(VecDeque::with_capacity(capacity.min(1 << 16))),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.read().expect("buffer lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends `e`, evicting the oldest experience when full.
    pub fn push(&self, e: Experience) {
        let mut storage = self.storage.write().expect("buffer lock poisoned");
        if storage.len() == self.capacity {
            storage.pop_front();
        }
        storage.push_back(Arc::new(e));
    }

    /// Draws `n` experiences uniformly with replacement.
    pub fn sample(&self, n: usize) -> Result<Vec<Arc<Experience>>> {
        let storage = self.storage.read().expect("buffer lock poisoned");
        if storage.is_empty() {
            return Err(contract("cannot sample from an empty replay buffer"));
        }
        let mut rng = self.rng.lock().expect("buffer rng poisoned");
        Ok((0..n)
            .map(|_| Arc::clone(&storage[rng.gen_range(0..storage.len())]))
            .collect())
    }

    /// Oldest-first copy of the stored experiences.
    pub fn snapshot(&self) -> Vec<Arc<Experience>> {
        self.storage
            .read()
            .expect("buffer lock poisoned")
            .iter()
            .cloned()
            .collect()
    }
}

/// Something that picks actions and optionally reacts to the resulting
/// experience (for instance by training).
pub trait Policy {
    fn act(&mut self, observation: &Observation) -> Result<usize>;

    fn observe(&mut self, _experience: &Experience) -> Result<()> {
        Ok(())
    }
}

/// Adapts a closure into a [`Policy`] that never learns.
pub struct FnPolicy<F>(pub F);

impl<F> Policy for FnPolicy<F>
where
    F: FnMut(&Observation) -> Result<usize>,
{
    fn act(&mut self, observation: &Observation) -> Result<usize> {
        (self.0)(observation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeOutcome {
    /// Undiscounted sum of rewards.
    pub total_return: f64,
    pub steps: usize,
}

/// Resets `env` with `seed` and runs until the episode ends or `max_steps`
/// transitions were taken. Every transition is pushed into `buffer` (when
/// given) before the policy observes it.
pub fn run_episode<E, P>(
    env: &mut E,
    seed: u64,
    policy: &mut P,
    max_steps: usize,
    buffer: Option<&ReplayBuffer>,
) -> Result<EpisodeOutcome>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    let mut outcome = EpisodeOutcome {
        total_return: 0.0,
        steps: 0,
    };
    if max_steps == 0 {
        return Ok(outcome);
    }
    let actions = env.action_count();
    let mut observation = env.reset(seed)?;
    while outcome.steps < max_steps {
        let action = policy.act(&observation)?;
        if action >= actions {
            return Err(contract(format!(
                "policy chose action {action} but only {actions} exist"
            )));
        }
        let transition = env.step(action)?;
        let experience = Experience::from_step(&observation, action, &transition);
        outcome.total_return += transition.reward;
        outcome.steps += 1;
        if let Some(buffer) = buffer {
            buffer.push(experience.clone());
        }
        policy.observe(&experience)?;
        if transition.done() {
            break;
        }
        observation = transition.observation;
    }
    Ok(outcome)
}
