//! The two-step speaker/listener coordination episode.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{build_input, AgentState, Input};
use crate::error::{Error, Result};

pub const N_ACTIONS: usize = 4;
pub const N_MESSAGES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Speaker,
    Listener,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameConfig {
    pub n_actions: usize,
    pub n_messages: usize,
    pub coordination_reward: f64,
    pub history_length: usize,
    /// Replace the received message with a uniformly random one.
    pub ablate_channel: bool,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            n_actions: N_ACTIONS,
            n_messages: N_MESSAGES,
            coordination_reward: 1.0,
            history_length: 100,
            ablate_channel: false,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_actions != N_ACTIONS {
            return Err(Error::config("game.n_actions", "must be 4"));
        }
        if self.n_messages != N_MESSAGES {
            return Err(Error::config("game.n_messages", "must be 4"));
        }
        if !(self.coordination_reward > 0.0 && self.coordination_reward.is_finite()) {
            return Err(Error::config(
                "game.coordination_reward",
                "must be a positive finite number",
            ));
        }
        if self.history_length == 0 {
            return Err(Error::config("game.history_length", "must be positive"));
        }
        Ok(())
    }
}

/// Sliding window of an agent's most recent actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionHistory {
    window: VecDeque<u8>,
    counts: [usize; N_ACTIONS],
    capacity: usize,
}

impl ActionHistory {
    pub fn new(capacity: usize) -> Self {
        ActionHistory {
            window: VecDeque::with_capacity(capacity + 1),
            counts: [0; N_ACTIONS],
            capacity,
        }
    }

    pub fn push(&mut self, action: u8) {
        self.window.push_back(action);
        self.counts[action as usize] += 1;
        if self.window.len() > self.capacity {
            let old = self.window.pop_front().expect("non-empty window");
            self.counts[old as usize] -= 1;
        }
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Empirical action proportions; uniform while the window is empty.
    pub fn proportions(&self) -> [f64; N_ACTIONS] {
        if self.window.is_empty() {
            return [1.0 / N_ACTIONS as f64; N_ACTIONS];
        }
        let len = self.window.len() as f64;
        self.counts.map(|c| c as f64 / len)
    }
}

/// Extra reward for choosing an action with empirical share `p_hat`.
pub fn diversity_penalty(p_hat: f64) -> f64 {
    (0.25 - p_hat).min(0.0)
}

/// Reward for one agent given the coordination outcome and its pre-update
/// proportion of the chosen action.
pub fn reward(cfg: &GameConfig, coordinated: bool, p_hat_of_action: f64) -> f64 {
    let base = if coordinated {
        cfg.coordination_reward
    } else {
        0.0
    };
    base + diversity_penalty(p_hat_of_action)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub round: u64,
    pub speaker_id: usize,
    pub listener_id: usize,
    /// Message sent by the speaker.
    pub message: u8,
    /// Message seen by the listener (differs from `message` only under ablation).
    pub received: u8,
    pub speaker_action: u8,
    pub listener_action: u8,
    pub coordinated: bool,
    pub speaker_reward: f64,
    pub listener_reward: f64,
}

impl EpisodeOutcome {
    /// Settles an episode from both choices and both pre-update histories.
    #[allow(clippy::too_many_arguments)]
    pub fn settle(
        cfg: &GameConfig,
        round: u64,
        speaker_id: usize,
        listener_id: usize,
        message: u8,
        received: u8,
        speaker_action: u8,
        listener_action: u8,
        speaker_p_hat: &[f64; N_ACTIONS],
        listener_p_hat: &[f64; N_ACTIONS],
    ) -> Self {
        let coordinated = speaker_action == listener_action;
        EpisodeOutcome {
            round,
            speaker_id,
            listener_id,
            message,
            received,
            speaker_action,
            listener_action,
            coordinated,
            speaker_reward: reward(cfg, coordinated, speaker_p_hat[speaker_action as usize]),
            listener_reward: reward(cfg, coordinated, listener_p_hat[listener_action as usize]),
        }
    }

    pub fn role_of(&self, agent: usize) -> Option<Role> {
        if agent == self.speaker_id {
            Some(Role::Speaker)
        } else if agent == self.listener_id {
            Some(Role::Listener)
        } else {
            None
        }
    }
}

/// One logged round, as written to the per-episode log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub round: u64,
    pub speaker: usize,
    pub listener: usize,
    pub message: u8,
    pub received: u8,
    pub speaker_action: u8,
    pub listener_action: u8,
    pub coordinated: bool,
    pub speaker_reward: f64,
    pub listener_reward: f64,
    pub speaker_supervised: bool,
    pub listener_supervised: bool,
}

impl EpisodeRecord {
    pub fn new(o: &EpisodeOutcome, speaker_supervised: bool, listener_supervised: bool) -> Self {
        EpisodeRecord {
            round: o.round,
            speaker: o.speaker_id,
            listener: o.listener_id,
            message: o.message,
            received: o.received,
            speaker_action: o.speaker_action,
            listener_action: o.listener_action,
            coordinated: o.coordinated,
            speaker_reward: o.speaker_reward,
            listener_reward: o.listener_reward,
            speaker_supervised,
            listener_supervised,
        }
    }
}

/// Everything produced by one round, including the inputs each agent observed.
#[derive(Debug, Clone, Copy)]
pub struct RoundPlay {
    pub outcome: EpisodeOutcome,
    pub speaker_input: Input,
    pub listener_input: Input,
}

/// Plays one episode and updates both action histories.
///
/// `rng` only drives the replacement message when the channel is ablated;
/// each agent draws its own noise and exploration from its private stream.
pub fn play_round<R: Rng + ?Sized>(
    speaker: &mut AgentState,
    listener: &mut AgentState,
    cfg: &GameConfig,
    rng: &mut R,
    round: u64,
) -> RoundPlay {
    debug_assert_ne!(speaker.id(), listener.id());
    let speaker_p_hat = speaker.history().proportions();
    let noise = speaker.draw_noise();
    let speaker_input = build_input(Role::Speaker, &noise, &speaker_p_hat);
    let (speaker_action, message) = speaker.select_outputs(&speaker_input, Role::Speaker);
    let message = message.expect("speakers always emit a message");

    let received = if cfg.ablate_channel {
        rng.random_range(0..N_MESSAGES as u8)
    } else {
        message
    };
    let listener_p_hat = listener.history().proportions();
    let mut one_hot = [0.0; N_MESSAGES];
    one_hot[received as usize] = 1.0;
    let listener_input = build_input(Role::Listener, &one_hot, &listener_p_hat);
    let (listener_action, _) = listener.select_outputs(&listener_input, Role::Listener);

    let outcome = EpisodeOutcome::settle(
        cfg,
        round,
        speaker.id(),
        listener.id(),
        message,
        received,
        speaker_action,
        listener_action,
        &speaker_p_hat,
        &listener_p_hat,
    );
    speaker.history_mut().push(speaker_action);
    listener.history_mut().push(listener_action);
    RoundPlay {
        outcome,
        speaker_input,
        listener_input,
    }
}
