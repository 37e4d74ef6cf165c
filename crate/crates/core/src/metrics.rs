//! Information-theoretic communication metrics over logged episodes.
//!
//! All logarithms are base 2, so every Jensen-Shannon divergence lies in
//! `[0, 1]`. Distributions are estimated from per-agent, per-role
//! `(message, action)` contingency tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{EpisodeRecord, Role, N_ACTIONS, N_MESSAGES};

pub type Distribution = [f64; 4];

pub const UNIFORM: Distribution = [0.25; 4];

/// Shannon entropy in bits, with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.log2()).sum::<f64>()
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).log2())
        .sum()
}

/// Jensen-Shannon divergence in bits.
pub fn jsd(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions must share a support");
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let d = 0.5 * kl(p, &m) + 0.5 * kl(q, &m);
    // rounding can push identical inputs a hair below zero
    d.clamp(0.0, 1.0)
}

/// Joint `(message, action)` counts for one agent in one role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleContingency {
    pub agent_id: usize,
    pub role: Role,
    /// Indexed `[message][action]`.
    pub counts: [[u64; N_ACTIONS]; N_MESSAGES],
}

impl RoleContingency {
    pub fn new(agent_id: usize, role: Role) -> Self {
        RoleContingency {
            agent_id,
            role,
            counts: [[0; N_ACTIONS]; N_MESSAGES],
        }
    }

    pub fn from_counts(agent_id: usize, role: Role, counts: [[u64; N_ACTIONS]; N_MESSAGES]) -> Self {
        RoleContingency {
            agent_id,
            role,
            counts,
        }
    }

    pub fn record(&mut self, message: u8, action: u8) {
        self.counts[message as usize][action as usize] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn message_counts(&self) -> [u64; N_MESSAGES] {
        self.counts.map(|row| row.iter().sum())
    }

    pub fn action_counts(&self) -> [u64; N_ACTIONS] {
        std::array::from_fn(|a| self.counts.iter().map(|row| row[a]).sum())
    }

    pub fn message_marginal(&self) -> Distribution {
        normalize(&self.message_counts())
    }

    pub fn action_marginal(&self) -> Distribution {
        normalize(&self.action_counts())
    }

    /// `p(action | message)`, uniform when the message was never observed.
    pub fn conditional(&self, message: usize) -> Distribution {
        normalize(&self.counts[message])
    }
}

fn normalize(counts: &[u64; 4]) -> Distribution {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return UNIFORM;
    }
    counts.map(|c| c as f64 / total as f64)
}

/// Normalized mutual information between messages and actions.
pub fn consistency(c: &RoleContingency) -> Result<f64> {
    let total = c.total();
    if total == 0 {
        return Err(Error::UndefinedMetric(format!(
            "consistency of agent {} as {:?} has no observations",
            c.agent_id, c.role
        )));
    }
    let n = total as f64;
    let pm = c.message_marginal();
    let pa = c.action_marginal();
    let z = 0.5 * (entropy(&pm) + entropy(&pa));
    if z <= 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (m, row) in c.counts.iter().enumerate() {
        for (a, &k) in row.iter().enumerate() {
            if k > 0 {
                let p = k as f64 / n;
                mi += p * (p / (pm[m] * pa[a])).log2();
            }
        }
    }
    Ok((mi / z).clamp(0.0, 1.0))
}

/// Both role tables of one agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTables {
    pub agent_id: usize,
    pub speaker: RoleContingency,
    pub listener: RoleContingency,
}

impl AgentTables {
    pub fn new(agent_id: usize) -> Self {
        AgentTables {
            agent_id,
            speaker: RoleContingency::new(agent_id, Role::Speaker),
            listener: RoleContingency::new(agent_id, Role::Listener),
        }
    }

    pub fn role(&self, role: Role) -> &RoleContingency {
        match role {
            Role::Speaker => &self.speaker,
            Role::Listener => &self.listener,
        }
    }

    pub fn total(&self) -> u64 {
        self.speaker.total() + self.listener.total()
    }

    /// Speaker and listener observations merged into one table.
    pub fn pooled(&self) -> RoleContingency {
        let mut counts = self.speaker.counts;
        for (row, other) in counts.iter_mut().zip(&self.listener.counts) {
            for (c, o) in row.iter_mut().zip(other) {
                *c += o;
            }
        }
        RoleContingency::from_counts(self.agent_id, Role::Speaker, counts)
    }
}

/// How between-agent divergence treats the two roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Compare agents role by role, then average over roles.
    #[default]
    PerRole,
    /// Merge each agent's speaker and listener observations first.
    Pooled,
}

fn mapping_divergence(a: &RoleContingency, b: &RoleContingency) -> f64 {
    (0..N_MESSAGES)
        .map(|m| jsd(&a.conditional(m), &b.conditional(m)))
        .sum::<f64>()
        / N_MESSAGES as f64
}

fn pairs<T>(items: &[T]) -> impl Iterator<Item = (&T, &T)> {
    items
        .iter()
        .enumerate()
        .flat_map(move |(i, a)| items[i + 1..].iter().map(move |b| (a, b)))
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Average per-message JSD between conditional action distributions of
/// every pair of agents.
pub fn between_agent_divergence(tables: &[AgentTables], pooling: Pooling) -> f64 {
    match pooling {
        Pooling::PerRole => {
            let per_role = [Role::Speaker, Role::Listener].map(|role| {
                let observed: Vec<&RoleContingency> = tables
                    .iter()
                    .map(|t| t.role(role))
                    .filter(|c| c.total() > 0)
                    .collect();
                pairs(&observed).map(|(a, b)| mapping_divergence(a, b)).collect::<Vec<_>>()
            });
            mean(per_role.iter().filter(|v| !v.is_empty()).map(|v| mean(v.iter().copied())))
        }
        Pooling::Pooled => {
            let pooled: Vec<RoleContingency> = tables
                .iter()
                .filter(|t| t.total() > 0)
                .map(AgentTables::pooled)
                .collect();
            mean(pairs(&pooled).map(|(a, b)| mapping_divergence(a, b)))
        }
    }
}

/// Average per-message JSD between each agent's speaker and listener mappings.
pub fn within_agent_divergence(tables: &[AgentTables]) -> f64 {
    mean(
        tables
            .iter()
            .filter(|t| t.speaker.total() > 0 && t.listener.total() > 0)
            .map(|t| mapping_divergence(&t.speaker, &t.listener)),
    )
}

/// Average pairwise JSD between agents' marginal message distributions as speakers.
pub fn signaling_divergence(tables: &[AgentTables]) -> f64 {
    let marginals: Vec<Distribution> = tables
        .iter()
        .filter(|t| t.speaker.total() > 0)
        .map(|t| t.speaker.message_marginal())
        .collect();
    mean(pairs(&marginals).map(|(a, b)| jsd(a, b)))
}

/// JSD of each agent's action marginal (both roles pooled) and message
/// marginal (speaker role) from uniform, averaged over agents.
pub fn behavioral_predictability(tables: &[AgentTables]) -> (f64, f64) {
    let action = mean(
        tables
            .iter()
            .filter(|t| t.total() > 0)
            .map(|t| jsd(&t.pooled().action_marginal(), &UNIFORM)),
    );
    let message = mean(
        tables
            .iter()
            .filter(|t| t.speaker.total() > 0)
            .map(|t| jsd(&t.speaker.message_marginal(), &UNIFORM)),
    );
    (action, message)
}

/// Inclusive round range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundWindow {
    pub first_round: u64,
    pub last_round: u64,
}

impl RoundWindow {
    pub fn new(first_round: u64, last_round: u64) -> Result<Self> {
        if last_round < first_round {
            return Err(Error::EmptyWindow(format!(
                "rounds {first_round}..={last_round}"
            )));
        }
        Ok(RoundWindow {
            first_round,
            last_round,
        })
    }

    /// The final `len` rounds of a run of `rounds` rounds.
    pub fn trailing(rounds: u64, len: u64) -> Result<Self> {
        if rounds == 0 || len == 0 {
            return Err(Error::EmptyWindow(format!(
                "trailing window of {len} rounds in a run of {rounds}"
            )));
        }
        Self::new(rounds.saturating_sub(len), rounds - 1)
    }

    pub fn contains(&self, round: u64) -> bool {
        (self.first_round..=self.last_round).contains(&round)
    }
}

/// Per-agent tables for one window plus the mean per-agent episode reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accumulated {
    pub tables: Vec<AgentTables>,
    /// Agents with no episode in the window; left out of every average.
    pub excluded: Vec<usize>,
    pub avg_reward: f64,
    pub episodes: u64,
    pub window: RoundWindow,
}

/// Fills contingency tables from the episodes whose round lies in `window`.
pub fn accumulate<'a>(
    log: impl IntoIterator<Item = &'a EpisodeRecord>,
    window: RoundWindow,
    n_agents: usize,
) -> Result<Accumulated> {
    let mut all: Vec<AgentTables> = (0..n_agents).map(AgentTables::new).collect();
    let mut reward_sum = 0.0;
    let mut episodes = 0u64;
    for e in log.into_iter().filter(|e| window.contains(e.round)) {
        all[e.speaker].speaker.record(e.message, e.speaker_action);
        all[e.listener].listener.record(e.received, e.listener_action);
        reward_sum += e.speaker_reward + e.listener_reward;
        episodes += 1;
    }
    if episodes == 0 {
        return Err(Error::EmptyWindow(format!(
            "no episodes in rounds {}..={}",
            window.first_round, window.last_round
        )));
    }
    let (tables, idle): (Vec<_>, Vec<_>) = all.into_iter().partition(|t| t.total() > 0);
    let excluded: Vec<usize> = idle.iter().map(|t| t.agent_id).collect();
    if !excluded.is_empty() {
        log::warn!("agents {excluded:?} played no episode in the metric window; excluded");
    }
    Ok(Accumulated {
        tables,
        excluded,
        avg_reward: reward_sum / (2 * episodes) as f64,
        episodes,
        window,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub speaking_consistency: f64,
    pub listening_consistency: f64,
    pub between_agent_divergence: f64,
    pub within_agent_divergence: f64,
    pub signaling_divergence: f64,
    pub action_predictability: f64,
    pub message_predictability: f64,
    pub avg_reward: f64,
    pub window: RoundWindow,
}

impl MetricsReport {
    pub fn from_accumulated(acc: &Accumulated, pooling: Pooling) -> Result<Self> {
        let role_consistency = |role: Role| -> Result<f64> {
            let values = acc
                .tables
                .iter()
                .map(|t| t.role(role))
                .filter(|c| c.total() > 0)
                .map(consistency)
                .collect::<Result<Vec<_>>>()?;
            Ok(mean(values))
        };
        let (action_predictability, message_predictability) =
            behavioral_predictability(&acc.tables);
        Ok(MetricsReport {
            speaking_consistency: role_consistency(Role::Speaker)?,
            listening_consistency: role_consistency(Role::Listener)?,
            between_agent_divergence: between_agent_divergence(&acc.tables, pooling),
            within_agent_divergence: within_agent_divergence(&acc.tables),
            signaling_divergence: signaling_divergence(&acc.tables),
            action_predictability,
            message_predictability,
            avg_reward: acc.avg_reward,
            window: acc.window,
        })
    }

    pub fn compute<'a>(
        log: impl IntoIterator<Item = &'a EpisodeRecord>,
        window: RoundWindow,
        n_agents: usize,
        pooling: Pooling,
    ) -> Result<Self> {
        Self::from_accumulated(&accumulate(log, window, n_agents)?, pooling)
    }
}
