//! Deterministic simulation loop, seed derivation and experiment sweeps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, AgentSeeds, AgentState};
use crate::error::{Error, Result};
use crate::game::{play_round, EpisodeRecord, GameConfig};
use crate::metrics::{MetricsReport, Pooling, RoundWindow};
use crate::topology::{generate, graph_stats, sample_pair, GraphStats, SocialNetwork, TopologySpec};

pub const DEFAULT_ROUNDS: u64 = 120_000;
pub const DEFAULT_METRIC_WINDOW: u64 = 10_000;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a cell and a repetition index.
///
/// `h = splitmix64(master ^ splitmix64(cell + K1))`, then
/// `splitmix64(h ^ splitmix64(rep + K2))`, where `splitmix64` is the
/// standard SplitMix64 output function. This definition is frozen: changing
/// it changes every published seed.
pub fn derive_seed(master: u64, cell: u64, rep: u64) -> u64 {
    const K1: u64 = 0x6A09_E667_F3BC_C908;
    const K2: u64 = 0xBB67_AE85_84CA_A73B;
    let h = splitmix64(master ^ splitmix64(cell.wrapping_add(K1)));
    splitmix64(h ^ splitmix64(rep.wrapping_add(K2)))
}

// Per-run random streams, all derived from the run seed.
const STREAM_TOPOLOGY: u64 = 1 << 32;
const STREAM_PAIRS: u64 = 2 << 32;
const STREAM_ROLES: u64 = 3 << 32;
const STREAM_CHANNEL: u64 = 4 << 32;
const STREAM_AGENT_INIT: u64 = 5 << 32;
const STREAM_AGENT_POLICY: u64 = 6 << 32;
const STREAM_AGENT_REPLAY: u64 = 7 << 32;

fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, index))
}

fn default_rounds() -> u64 {
    DEFAULT_ROUNDS
}

fn default_metric_window() -> u64 {
    DEFAULT_METRIC_WINDOW
}

/// Everything that determines a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub topology: TopologySpec,
    #[serde(default)]
    pub supervision_rate: f64,
    #[serde(default = "default_rounds")]
    pub rounds: u64,
    /// Metrics are computed over this many final rounds.
    #[serde(default = "default_metric_window")]
    pub metric_window: u64,
    #[serde(default)]
    pub game: GameConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub pooling: Pooling,
    /// When set, metrics are also computed over each block of this many rounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_interval: Option<u64>,
    #[serde(default)]
    pub master_seed: u64,
}

impl SimulationConfig {
    pub fn new(topology: TopologySpec, supervision_rate: f64, master_seed: u64) -> Self {
        SimulationConfig {
            topology,
            supervision_rate,
            rounds: DEFAULT_ROUNDS,
            metric_window: DEFAULT_METRIC_WINDOW,
            game: GameConfig::default(),
            agent: AgentConfig::default(),
            pooling: Pooling::default(),
            series_interval: None,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.topology
            .validate()
            .map_err(|e| Error::config("topology", e.to_string()))?;
        if !(0.0..=1.0).contains(&self.supervision_rate) {
            return Err(Error::config(
                "supervision_rate",
                format!("must lie in [0, 1], got {}", self.supervision_rate),
            ));
        }
        if self.rounds == 0 {
            return Err(Error::EmptyWindow("rounds is 0".into()));
        }
        if self.metric_window == 0 {
            return Err(Error::EmptyWindow("metric_window is 0".into()));
        }
        if self.rounds < self.metric_window {
            return Err(Error::config(
                "rounds",
                format!(
                    "must be at least metric_window ({}), got {}",
                    self.metric_window, self.rounds
                ),
            ));
        }
        if self.series_interval == Some(0) {
            return Err(Error::config("series_interval", "must be positive"));
        }
        self.game.validate()?;
        self.agent.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = parse_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Deserializes JSON, reporting the path of the offending field on failure.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(
            if path.is_empty() || path == "." {
                "<root>".to_string()
            } else {
                path
            },
            e.into_inner().to_string(),
        )
    })
}

/// Metrics over one block of rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub round: u64,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: SimulationConfig,
    pub graph: GraphStats,
    pub edge_list: String,
    pub metrics: MetricsReport,
    /// Fraction of coordinated episodes in the metric window.
    pub coordination_rate: f64,
    pub wall_time_secs: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<SeriesPoint>,
}

fn pair_mut<T>(items: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = items.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = items.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

/// A run in progress. Rounds are played strictly in sequence.
pub struct Simulation {
    cfg: SimulationConfig,
    network: SocialNetwork,
    agents: Vec<AgentState>,
    pair_rng: ChaCha8Rng,
    role_rng: ChaCha8Rng,
    channel_rng: ChaCha8Rng,
    round: u64,
}

impl Simulation {
    pub fn new(cfg: SimulationConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.master_seed;
        let network = generate(&cfg.topology, &mut stream(seed, STREAM_TOPOLOGY, 0))?;
        let agents = (0..network.n())
            .map(|id| {
                let seeds = AgentSeeds {
                    init: derive_seed(seed, STREAM_AGENT_INIT, id as u64),
                    policy: derive_seed(seed, STREAM_AGENT_POLICY, id as u64),
                    replay: derive_seed(seed, STREAM_AGENT_REPLAY, id as u64),
                };
                AgentState::new(
                    id,
                    &cfg.agent,
                    cfg.game.history_length,
                    cfg.game.coordination_reward,
                    seeds,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Simulation {
            network,
            agents,
            pair_rng: stream(seed, STREAM_PAIRS, 0),
            role_rng: stream(seed, STREAM_ROLES, 0),
            channel_rng: stream(seed, STREAM_CHANNEL, 0),
            round: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.cfg
    }

    pub fn network(&self) -> &SocialNetwork {
        &self.network
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn is_finished(&self) -> bool {
        self.round >= self.cfg.rounds
    }

    /// Sample a pair, toss for roles, play, store experiences, train both.
    pub fn step(&mut self) -> Result<EpisodeRecord> {
        let round = self.round;
        let epsilon = self.cfg.agent.epsilon.value(round, self.cfg.rounds);
        let (a, b) = sample_pair(&self.network, &mut self.pair_rng);
        let (speaker_id, listener_id) = if self.role_rng.random::<bool>() {
            (a, b)
        } else {
            (b, a)
        };
        let (speaker, listener) = pair_mut(&mut self.agents, speaker_id, listener_id);
        speaker.set_epsilon(epsilon);
        listener.set_epsilon(epsilon);
        let play = play_round(speaker, listener, &self.cfg.game, &mut self.channel_rng, round);
        let s = self.cfg.supervision_rate;
        let speaker_supervised = speaker.record_and_supervise(&play.outcome, &play.speaker_input, s);
        let listener_supervised =
            listener.record_and_supervise(&play.outcome, &play.listener_input, s);
        let batch = self.cfg.agent.batch_size;
        speaker.train_step(batch)?;
        listener.train_step(batch)?;
        self.round += 1;
        Ok(EpisodeRecord::new(&play.outcome, speaker_supervised, listener_supervised))
    }
}

/// Runs one simulation, calling `observer` on every episode in order.
pub fn run_simulation_with<F>(cfg: &SimulationConfig, mut observer: F) -> Result<RunResult>
where
    F: FnMut(&EpisodeRecord) -> Result<()>,
{
    let started = Instant::now();
    let mut sim = Simulation::new(cfg.clone())?;
    let window = RoundWindow::trailing(cfg.rounds, cfg.metric_window)?;
    let n = sim.network().n();
    let mut kept = Vec::with_capacity(cfg.metric_window as usize);
    let mut block = Vec::new();
    let mut series = Vec::new();
    while !sim.is_finished() {
        let rec = sim.step()?;
        observer(&rec)?;
        if window.contains(rec.round) {
            kept.push(rec);
        }
        if let Some(every) = cfg.series_interval {
            block.push(rec);
            if (rec.round + 1) % every == 0 {
                let w = RoundWindow::new(rec.round + 1 - every, rec.round)?;
                series.push(SeriesPoint {
                    round: rec.round + 1,
                    metrics: MetricsReport::compute(&block, w, n, cfg.pooling)?,
                });
                block.clear();
            }
        }
    }
    let metrics = MetricsReport::compute(&kept, window, n, cfg.pooling)?;
    let coordination_rate =
        kept.iter().filter(|r| r.coordinated).count() as f64 / kept.len() as f64;
    Ok(RunResult {
        config: cfg.clone(),
        graph: graph_stats(sim.network()),
        edge_list: sim.network().to_edge_list(),
        metrics,
        coordination_rate,
        wall_time_secs: started.elapsed().as_secs_f64(),
        series,
    })
}

pub fn run_simulation(cfg: &SimulationConfig) -> Result<RunResult> {
    run_simulation_with(cfg, |_| Ok(()))
}

/// Writes every episode of a run as one JSON object per line.
pub fn run_simulation_logged(cfg: &SimulationConfig, log_path: &Path) -> Result<RunResult> {
    let file = File::create(log_path).map_err(|e| Error::io(log_path, e))?;
    let mut out = BufWriter::new(file);
    let result = run_simulation_with(cfg, |rec| {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(log_path, e))
    })?;
    out.flush().map_err(|e| Error::io(log_path, e))?;
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExperimentId {
    #[serde(rename = "1")]
    TopologyTypes,
    #[serde(rename = "2")]
    AverageDegree,
    #[serde(rename = "3")]
    GlobalConnections,
    #[serde(rename = "custom")]
    Custom,
    /// A lone `simulate` run.
    #[serde(rename = "single")]
    Single,
}

impl ExperimentId {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::TopologyTypes => "1",
            ExperimentId::AverageDegree => "2",
            ExperimentId::GlobalConnections => "3",
            ExperimentId::Custom => "custom",
            ExperimentId::Single => "single",
        }
    }
}

impl std::str::FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(ExperimentId::TopologyTypes),
            "2" => Ok(ExperimentId::AverageDegree),
            "3" => Ok(ExperimentId::GlobalConnections),
            "custom" => Ok(ExperimentId::Custom),
            "single" => Ok(ExperimentId::Single),
            other => Err(Error::Parse(format!("unknown experiment id `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Full,
    Desk,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scale::Full),
            "desk" => Ok(Scale::Desk),
            other => Err(Error::Parse(format!("unknown scale `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub topology: TopologySpec,
    pub supervision_rate: f64,
}

/// A grid of topologies x supervision rates, each repeated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub experiment: ExperimentId,
    pub topologies: Vec<TopologySpec>,
    pub supervision_rates: Vec<f64>,
    pub repetitions: usize,
    #[serde(default = "default_rounds")]
    pub rounds: u64,
    #[serde(default = "default_metric_window")]
    pub metric_window: u64,
    #[serde(default)]
    pub game: GameConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub pooling: Pooling,
}

/// `0.0, 0.1, ..., 0.9`, built from integers so the values print exactly.
fn tenths(range: std::ops::RangeInclusive<u32>) -> Vec<f64> {
    range.map(|i| i as f64 / 10.0).collect()
}

impl SweepSpec {
    fn grid(
        experiment: ExperimentId,
        topologies: Vec<TopologySpec>,
        supervision_rates: Vec<f64>,
        repetitions: usize,
    ) -> Self {
        SweepSpec {
            experiment,
            topologies,
            supervision_rates,
            repetitions,
            rounds: DEFAULT_ROUNDS,
            metric_window: DEFAULT_METRIC_WINDOW,
            game: GameConfig::default(),
            agent: AgentConfig::default(),
            pooling: Pooling::default(),
        }
    }

    /// The preset grids of the three experiments, at full or desk scale.
    pub fn preset(id: ExperimentId, scale: Scale) -> Result<Self> {
        const N: usize = 10;
        let spec = match (id, scale) {
            (ExperimentId::TopologyTypes, Scale::Full) => Self::grid(
                id,
                vec![
                    TopologySpec::ring(N),
                    TopologySpec::random(N, 0.2),
                    TopologySpec::small_world(N, 0.2),
                    TopologySpec::clique(N),
                ],
                tenths(0..=9),
                10,
            ),
            (ExperimentId::TopologyTypes, Scale::Desk) => Self::grid(
                id,
                vec![
                    TopologySpec::ring(N),
                    TopologySpec::clique(N),
                    TopologySpec::random(N, 0.2),
                    TopologySpec::small_world(N, 0.2),
                ],
                vec![0.0, 0.5],
                5,
            ),
            (ExperimentId::AverageDegree, Scale::Full) => Self::grid(
                id,
                tenths(2..=9).into_iter().map(|p| TopologySpec::random(N, p)).collect(),
                tenths(0..=9),
                5,
            ),
            (ExperimentId::AverageDegree, Scale::Desk) => Self::grid(
                id,
                [0.2, 0.5, 0.9].map(|p| TopologySpec::random(N, p)).to_vec(),
                vec![0.0, 0.5],
                3,
            ),
            (ExperimentId::GlobalConnections, Scale::Full) => Self::grid(
                id,
                tenths(0..=9).into_iter().map(|p| TopologySpec::small_world(N, p)).collect(),
                tenths(0..=9),
                5,
            ),
            (ExperimentId::GlobalConnections, Scale::Desk) => Self::grid(
                id,
                [0.0, 0.4, 0.9].map(|p| TopologySpec::small_world(N, p)).to_vec(),
                vec![0.0, 0.5],
                3,
            ),
            (other, _) => {
                return Err(Error::config(
                    "experiment",
                    format!("no preset for experiment `{}`", other.as_str()),
                ))
            }
        };
        Ok(spec)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = parse_json(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.topologies.is_empty() {
            return Err(Error::config("topologies", "must not be empty"));
        }
        if self.supervision_rates.is_empty() {
            return Err(Error::config("supervision_rates", "must not be empty"));
        }
        if self.repetitions == 0 {
            return Err(Error::config("repetitions", "must be positive"));
        }
        for cell in self.cells() {
            self.config_for(&cell, 0).validate()?;
        }
        Ok(())
    }

    /// Cells in topology-major order; a cell's position is its seed index.
    pub fn cells(&self) -> Vec<SweepCell> {
        self.topologies
            .iter()
            .flat_map(|t| {
                self.supervision_rates.iter().map(move |&s| SweepCell {
                    topology: *t,
                    supervision_rate: s,
                })
            })
            .collect()
    }

    pub fn n_runs(&self) -> usize {
        self.topologies.len() * self.supervision_rates.len() * self.repetitions
    }

    pub fn config_for(&self, cell: &SweepCell, seed: u64) -> SimulationConfig {
        SimulationConfig {
            topology: cell.topology,
            supervision_rate: cell.supervision_rate,
            rounds: self.rounds,
            metric_window: self.metric_window,
            game: self.game,
            agent: self.agent,
            pooling: self.pooling,
            series_interval: None,
            master_seed: seed,
        }
    }

    /// Shortens every run, shrinking the metric window if it no longer fits.
    pub fn with_rounds(mut self, rounds: u64) -> Self {
        self.rounds = rounds;
        self.metric_window = self.metric_window.min(rounds);
        self
    }
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment_id: String,
    pub topology_kind: String,
    pub topology_param: Option<f64>,
    pub realized_avg_degree: f64,
    pub realized_degree_variance: f64,
    pub n_global_edges: usize,
    pub supervision_rate: f64,
    pub repetition: usize,
    pub seed: u64,
    pub avg_reward: f64,
    pub speaking_consistency: f64,
    pub listening_consistency: f64,
    pub between_agent_divergence: f64,
    pub within_agent_divergence: f64,
    pub signaling_divergence: f64,
    pub action_predictability: f64,
    pub message_predictability: f64,
}

impl ResultRow {
    pub fn from_run(experiment: ExperimentId, repetition: usize, run: &RunResult) -> Self {
        let m = &run.metrics;
        ResultRow {
            experiment_id: experiment.as_str().to_string(),
            topology_kind: run.config.topology.kind.as_str().to_string(),
            topology_param: run.config.topology.effective_param(),
            realized_avg_degree: run.graph.avg_degree,
            realized_degree_variance: run.graph.degree_variance,
            n_global_edges: run.graph.n_global_edges,
            supervision_rate: run.config.supervision_rate,
            repetition,
            seed: run.config.master_seed,
            avg_reward: m.avg_reward,
            speaking_consistency: m.speaking_consistency,
            listening_consistency: m.listening_consistency,
            between_agent_divergence: m.between_agent_divergence,
            within_agent_divergence: m.within_agent_divergence,
            signaling_divergence: m.signaling_divergence,
            action_predictability: m.action_predictability,
            message_predictability: m.message_predictability,
        }
    }
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<ResultRow>, _>>()
        .map_err(|e| Error::csv(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub cell: usize,
    pub repetition: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    /// Successful runs ordered by (cell, repetition).
    pub rows: Vec<ResultRow>,
    pub runs: Vec<RunResult>,
    pub failures: Vec<RunFailure>,
}

impl SweepOutcome {
    pub fn is_partial_failure(&self) -> bool {
        !self.failures.is_empty() && !self.rows.is_empty()
    }

    pub fn is_total_failure(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Runs every (cell, repetition) of the sweep on at most `parallelism`
/// threads. Results do not depend on the degree of parallelism.
pub fn run_sweep(spec: &SweepSpec, master_seed: u64, parallelism: usize) -> Result<SweepOutcome> {
    spec.validate()?;
    let cells = spec.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.repetitions).map(move |r| (c, r)))
        .collect();
    let total = jobs.len();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))?;
    let done = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<(usize, usize, u64, Result<RunResult>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| {
                let seed = derive_seed(master_seed, c as u64, r as u64);
                let result = run_simulation(&spec.config_for(&cells[c], seed));
                let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                log::info!("run {k}/{total} done (cell {c}, rep {r})");
                (c, r, seed, result)
            })
            .collect()
    });
    let mut outcome = SweepOutcome::default();
    for (cell, repetition, seed, result) in results {
        match result {
            Ok(run) => {
                outcome.rows.push(ResultRow::from_run(spec.experiment, repetition, &run));
                outcome.runs.push(run);
            }
            Err(e) => {
                log::error!("run failed (cell {cell}, rep {repetition}, seed {seed}): {e}");
                outcome.failures.push(RunFailure {
                    cell,
                    repetition,
                    seed,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(topology: TopologySpec, s: f64, seed: u64) -> SimulationConfig {
        SimulationConfig {
            rounds: 600,
            metric_window: 300,
            ..SimulationConfig::new(topology, s, seed)
        }
    }

    #[test]
    fn derive_seed_is_stable() {
        assert_eq!(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
        assert_ne!(derive_seed(0, 0, 0), 0);
    }

    #[test]
    fn zero_rounds_is_an_empty_window() {
        let cfg = SimulationConfig {
            rounds: 0,
            ..SimulationConfig::new(TopologySpec::ring(10), 0.0, 1)
        };
        assert!(matches!(run_simulation(&cfg), Err(Error::EmptyWindow(_))));
    }

    #[test]
    fn window_larger_than_run_is_rejected() {
        let cfg = SimulationConfig {
            rounds: 50,
            ..SimulationConfig::new(TopologySpec::ring(10), 0.0, 1)
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("`rounds`"));
    }

    #[test]
    fn same_seed_same_result() {
        let cfg = short(TopologySpec::small_world(10, 0.3), 0.5, 42);
        let mut a = run_simulation(&cfg).unwrap();
        let mut b = run_simulation(&cfg).unwrap();
        a.wall_time_secs = 0.0;
        b.wall_time_secs = 0.0;
        assert_eq!(a, b);
        let other = run_simulation(&short(TopologySpec::small_world(10, 0.3), 0.5, 43)).unwrap();
        assert_ne!(a.metrics, other.metrics);
    }

    #[test]
    fn series_blocks_cover_the_run() {
        let cfg = SimulationConfig {
            series_interval: Some(200),
            ..short(TopologySpec::ring(10), 0.0, 3)
        };
        let run = run_simulation(&cfg).unwrap();
        let rounds: Vec<u64> = run.series.iter().map(|p| p.round).collect();
        assert_eq!(rounds, vec![200, 400, 600]);
    }

    #[test]
    fn presets_have_the_documented_sizes() {
        use ExperimentId::*;
        let size = |id, scale| SweepSpec::preset(id, scale).unwrap();
        let e1 = size(TopologyTypes, Scale::Full);
        assert_eq!((e1.cells().len(), e1.n_runs()), (40, 400));
        let e2 = size(AverageDegree, Scale::Full);
        assert_eq!((e2.cells().len(), e2.n_runs()), (80, 400));
        let e3 = size(GlobalConnections, Scale::Full);
        assert_eq!((e3.cells().len(), e3.n_runs()), (100, 500));
        assert_eq!(size(TopologyTypes, Scale::Desk).n_runs(), 40);
        assert_eq!(size(AverageDegree, Scale::Desk).n_runs(), 18);
        assert_eq!(size(GlobalConnections, Scale::Desk).n_runs(), 18);
        assert!(SweepSpec::preset(Custom, Scale::Full).is_err());
        assert_eq!(e2.supervision_rates[3], 0.3);
        assert_eq!(e2.topologies[7].param, Some(0.9));
    }

    #[test]
    fn config_errors_name_the_field() {
        let err = SimulationConfig::from_json(r#"{"topology":{"kind":"ring"},"supervision_rate":"x"}"#)
            .unwrap_err();
        assert!(err.to_string().contains("supervision_rate"), "{err}");
        let err = SimulationConfig::from_json(r#"{"topology":{"kind":"ring"},"agent":{"batch_sise":3}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("batch_sise"), "{err}");
        let err = SimulationConfig::from_json(r#"{"topology":{"kind":"random","param":2.0},"rounds":20000}"#)
            .unwrap_err();
        assert!(err.to_string().contains("topology"), "{err}");
        let ok = SimulationConfig::from_json(r#"{"topology":{"kind":"clique"}}"#).unwrap();
        assert_eq!(ok.rounds, 120_000);
        assert_eq!(ok.topology.n_agents, 10);
    }

    #[test]
    fn results_csv_round_trip() {
        let run = run_simulation(&short(TopologySpec::ring(10), 0.0, 5)).unwrap();
        let row = ResultRow::from_run(ExperimentId::Single, 0, &run);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        write_results_csv(&path, &[row.clone()]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "experiment_id,topology_kind,topology_param,realized_avg_degree,realized_degree_variance,\
             n_global_edges,supervision_rate,repetition,seed,avg_reward,speaking_consistency,\
             listening_consistency,between_agent_divergence,within_agent_divergence,\
             signaling_divergence,action_predictability,message_predictability\n"
        ));
        assert_eq!(read_results_csv(&path).unwrap(), vec![row]);
    }
}
