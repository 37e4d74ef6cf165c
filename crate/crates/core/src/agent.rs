//! Independent Q-learning agents: input encoding, epsilon-greedy selection,
//! replay memory with supervised substitution, and one-step Q updates.

use std::collections::VecDeque;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ActionHistory, EpisodeOutcome, Role, N_ACTIONS, N_MESSAGES};
use crate::neuralnet::{Algorithm, Gradients, Mlp, OptimizerState, HEAD_WIDTH};

/// Role bit, message slot, action proportions.
pub const INPUT_DIM: usize = 1 + N_MESSAGES + N_ACTIONS;

pub type Input = [f64; INPUT_DIM];

pub fn build_input(role: Role, message_or_noise: &[f64; N_MESSAGES], p_hat: &[f64; N_ACTIONS]) -> Input {
    let mut x = [0.0; INPUT_DIM];
    x[0] = match role {
        Role::Speaker => 1.0,
        Role::Listener => 0.0,
    };
    x[1..1 + N_MESSAGES].copy_from_slice(message_or_noise);
    x[1 + N_MESSAGES..].copy_from_slice(p_hat);
    x
}

/// Exploration rate as a function of the global round index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    /// Fraction of the run over which epsilon decays linearly.
    pub decay_fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            decay_fraction: 0.2,
        }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, round: u64, total_rounds: u64) -> f64 {
        let decay_rounds = self.decay_fraction * total_rounds as f64;
        if decay_rounds <= 0.0 || round as f64 >= decay_rounds {
            return self.end;
        }
        let frac = round as f64 / decay_rounds;
        self.start + (self.end - self.start) * frac
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("start", self.start), ("end", self.end), ("decay_fraction", self.decay_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(
                    format!("agent.epsilon.{name}"),
                    format!("must lie in [0, 1], got {v}"),
                ));
            }
        }
        Ok(())
    }
}

/// Linear decay from 1.0 to 0.05 over the first 20% of rounds.
pub fn epsilon_schedule(round: u64, total_rounds: u64) -> f64 {
    EpsilonSchedule::default().value(round, total_rounds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Algorithm,
    pub epsilon: EpsilonSchedule,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            replay_capacity: 2_000,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Algorithm::Adam,
            epsilon: EpsilonSchedule::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replay_capacity == 0 {
            return Err(Error::config("agent.replay_capacity", "must be positive"));
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return Err(Error::config(
                "agent.batch_size",
                format!("must lie in 1..={}", self.replay_capacity),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("agent.learning_rate", "must be positive"));
        }
        self.epsilon.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperienceKind {
    Reinforcement,
    /// Miscoordinated episode relabelled with the partner's action.
    Supervising { target_action: u8 },
}

/// One stored transition. Episodes are one-step terminal, so no next state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experience {
    pub input: Input,
    pub role: Role,
    pub action_taken: u8,
    /// Sent if speaker, received if listener.
    pub message: u8,
    pub reward: f64,
    pub kind: ExperienceKind,
}

/// Bounded FIFO memory.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<Experience>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, e: Experience) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.entries.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Experience> {
        self.entries.get(i)
    }
}

/// Seeds for the agent's independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentSeeds {
    pub init: u64,
    pub policy: u64,
    pub replay: u64,
}

#[derive(Debug, Clone)]
pub struct AgentState {
    id: usize,
    net: Mlp,
    opt: OptimizerState,
    replay: ReplayBuffer,
    history: ActionHistory,
    epsilon: f64,
    coordination_reward: f64,
    /// Exploration, speaker noise and supervision coins.
    policy_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    grads: Gradients,
}

impl AgentState {
    pub fn new(
        id: usize,
        cfg: &AgentConfig,
        history_length: usize,
        coordination_reward: f64,
        seeds: AgentSeeds,
    ) -> Result<Self> {
        let net = Mlp::init(INPUT_DIM, &mut ChaCha8Rng::seed_from_u64(seeds.init));
        Self::with_net(id, net, cfg, history_length, coordination_reward, seeds)
    }

    pub fn with_net(
        id: usize,
        net: Mlp,
        cfg: &AgentConfig,
        history_length: usize,
        coordination_reward: f64,
        seeds: AgentSeeds,
    ) -> Result<Self> {
        cfg.validate()?;
        if net.input_dim() != INPUT_DIM {
            return Err(Error::config("net", format!("input_dim must be {INPUT_DIM}")));
        }
        let opt = OptimizerState::new(cfg.optimizer, cfg.learning_rate, &net)?;
        let grads = Gradients::zeros_like(&net);
        Ok(AgentState {
            id,
            net,
            opt,
            replay: ReplayBuffer::new(cfg.replay_capacity),
            history: ActionHistory::new(history_length),
            epsilon: cfg.epsilon.start,
            coordination_reward,
            policy_rng: ChaCha8Rng::seed_from_u64(seeds.policy),
            replay_rng: ChaCha8Rng::seed_from_u64(seeds.replay),
            grads,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn history(&self) -> &ActionHistory {
        &self.history
    }

    pub fn history_mut(&mut self) -> &mut ActionHistory {
        &mut self.history
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        assert!((0.0..=1.0).contains(&epsilon), "epsilon out of range: {epsilon}");
        self.epsilon = epsilon;
    }

    /// I.i.d. uniform [0, 1) noise for the speaker's message slot.
    pub fn draw_noise(&mut self) -> [f64; N_MESSAGES] {
        std::array::from_fn(|_| self.policy_rng.random::<f64>())
    }

    /// Epsilon-greedy choice over the action head, and over the message
    /// head for speakers with an independent exploration draw.
    pub fn select_outputs(&mut self, input: &Input, role: Role) -> (u8, Option<u8>) {
        let q = self.net.forward(input);
        let action = self.epsilon_greedy(&q.action);
        let message = match role {
            Role::Speaker => Some(self.epsilon_greedy(&q.message)),
            Role::Listener => None,
        };
        (action, message)
    }

    fn epsilon_greedy(&mut self, q: &[f64; HEAD_WIDTH]) -> u8 {
        if self.policy_rng.random::<f64>() < self.epsilon {
            self.policy_rng.random_range(0..HEAD_WIDTH as u8)
        } else {
            argmax(q)
        }
    }

    /// Stores this agent's experience of `outcome`. A miscoordinated episode
    /// becomes a supervising one with probability `supervision_rate`.
    /// Returns whether the stored experience is supervising.
    pub fn record_and_supervise(
        &mut self,
        outcome: &EpisodeOutcome,
        own_input: &Input,
        supervision_rate: f64,
    ) -> bool {
        debug_assert!((0.0..=1.0).contains(&supervision_rate));
        let role = outcome
            .role_of(self.id)
            .expect("agent did not take part in this episode");
        let (action_taken, partner_action, message, reward) = match role {
            Role::Speaker => (
                outcome.speaker_action,
                outcome.listener_action,
                outcome.message,
                outcome.speaker_reward,
            ),
            Role::Listener => (
                outcome.listener_action,
                outcome.speaker_action,
                outcome.received,
                outcome.listener_reward,
            ),
        };
        let supervised =
            !outcome.coordinated && self.policy_rng.random::<f64>() < supervision_rate;
        let kind = if supervised {
            ExperienceKind::Supervising {
                target_action: partner_action,
            }
        } else {
            ExperienceKind::Reinforcement
        };
        self.replay.push(Experience {
            input: *own_input,
            role,
            action_taken,
            message,
            reward,
            kind,
        });
        supervised
    }

    /// One minibatch Q-regression step. Returns the mean squared error over
    /// all trained output units, or 0 when the buffer is still too small.
    pub fn train_step(&mut self, batch_size: usize) -> Result<f64> {
        if self.replay.len() < batch_size || batch_size == 0 {
            return Ok(0.0);
        }
        let picks = index::sample(&mut self.replay_rng, self.replay.len(), batch_size);
        self.grads.clear();
        let mut sq_err = 0.0;
        let mut terms = 0usize;
        let r_c = self.coordination_reward;
        for i in picks.iter() {
            let e = &self.replay.entries[i];
            let (action_unit, target) = match e.kind {
                ExperienceKind::Reinforcement => (e.action_taken, e.reward),
                ExperienceKind::Supervising { target_action } => (target_action, r_c),
            };
            let acts = self.net.forward_cached(&e.input);
            let mut d_action = [0.0; HEAD_WIDTH];
            let mut d_message = [0.0; HEAD_WIDTH];
            let residual = acts.outputs.action[action_unit as usize] - target;
            d_action[action_unit as usize] = 2.0 * residual;
            sq_err += residual * residual;
            terms += 1;
            if e.role == Role::Speaker {
                let residual = acts.outputs.message[e.message as usize] - target;
                d_message[e.message as usize] = 2.0 * residual;
                sq_err += residual * residual;
                terms += 1;
            }
            self.net
                .accumulate_gradients(&e.input, &acts, &d_action, &d_message, &mut self.grads);
        }
        let loss = sq_err / terms as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                context: "loss",
                detail: format!("agent {} produced loss {loss}", self.id),
            });
        }
        self.opt.step(&mut self.net, &self.grads)?;
        Ok(loss)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(q: &[f64; HEAD_WIDTH]) -> u8 {
    let mut best = 0;
    for k in 1..HEAD_WIDTH {
        if q[k] > q[best] {
            best = k;
        }
    }
    best as u8
}
