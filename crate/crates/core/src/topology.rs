//! Social networks over agent indices and adjacency-constrained partner sampling.
//!
//! Node indices `0..n` define the canonical ring order. Every generated graph
//! is undirected, has no self-loops and no isolated nodes.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rejected `Random` samples tolerated before giving up.
pub const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Ring,
    Clique,
    Random,
    SmallWorld,
}

impl TopologyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TopologyKind::Ring => "ring",
            TopologyKind::Clique => "clique",
            TopologyKind::Random => "random",
            TopologyKind::SmallWorld => "small_world",
        }
    }

    pub fn takes_param(self) -> bool {
        matches!(self, TopologyKind::Random | TopologyKind::SmallWorld)
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(TopologyKind::Ring),
            "clique" => Ok(TopologyKind::Clique),
            "random" => Ok(TopologyKind::Random),
            "small_world" | "small-world" | "smallworld" => Ok(TopologyKind::SmallWorld),
            other => Err(Error::Parse(format!("unknown topology kind `{other}`"))),
        }
    }
}

/// Which network to build. `param` is the connection probability for
/// `Random` and the shortcut probability for `SmallWorld`; it is ignored for
/// `Ring` and `Clique`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    #[serde(default = "default_n_agents")]
    pub n_agents: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
}

fn default_n_agents() -> usize {
    10
}

impl TopologySpec {
    pub fn ring(n_agents: usize) -> Self {
        TopologySpec {
            kind: TopologyKind::Ring,
            n_agents,
            param: None,
        }
    }

    pub fn clique(n_agents: usize) -> Self {
        TopologySpec {
            kind: TopologyKind::Clique,
            n_agents,
            param: None,
        }
    }

    pub fn random(n_agents: usize, p: f64) -> Self {
        TopologySpec {
            kind: TopologyKind::Random,
            n_agents,
            param: Some(p),
        }
    }

    pub fn small_world(n_agents: usize, p: f64) -> Self {
        TopologySpec {
            kind: TopologyKind::SmallWorld,
            n_agents,
            param: Some(p),
        }
    }

    /// The parameter that actually takes effect (`None` for ring and clique).
    pub fn effective_param(&self) -> Option<f64> {
        if self.kind.takes_param() {
            self.param
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 3 {
            return Err(Error::InvalidTopology(format!(
                "n_agents must be at least 3, got {}",
                self.n_agents
            )));
        }
        if self.kind.takes_param() {
            match self.param {
                None => {
                    return Err(Error::InvalidTopology(format!(
                        "{} requires a probability parameter",
                        self.kind
                    )))
                }
                Some(p) if !(0.0..=1.0).contains(&p) => {
                    return Err(Error::InvalidTopology(format!(
                        "param must lie in [0, 1], got {p}"
                    )))
                }
                Some(_) => {}
            }
        } else if self.param.is_some() {
            log::warn!("param is ignored for {} networks", self.kind);
        }
        Ok(())
    }
}

/// Undirected simple graph. Edges are stored once as `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocialNetwork {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl SocialNetwork {
    /// Builds a network from an edge list, normalizing orientation and
    /// checking every invariant.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidTopology(format!(
                    "edge ({a}, {b}) out of range for n={n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidTopology(format!("self-loop at node {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let net = Self::from_set_unchecked(n, set);
        if let Some(node) = net.isolated_node() {
            return Err(Error::InvalidTopology(format!("node {node} is isolated")));
        }
        Ok(net)
    }

    fn from_set_unchecked(n: usize, edges: BTreeSet<(usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        SocialNetwork {
            n,
            edges,
            adjacency,
        }
    }

    fn isolated_node(&self) -> Option<usize> {
        self.adjacency.iter().position(|nb| nb.is_empty())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// Serializes as `n=<int>` followed by one `i j` line per edge with `i < j`.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n={}\n", self.n);
        for (a, b) in &self.edges {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }

    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty edge list".into()))?;
        let n = header
            .strip_prefix("n=")
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::Parse(format!("bad header line `{header}`")))?;
        let mut edges = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(a)), Some(Ok(b)), None) if a < b => edges.push((a, b)),
                _ => return Err(Error::Parse(format!("bad edge line `{line}`"))),
            }
        }
        Self::from_edges(n, edges)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub avg_degree: f64,
    pub degree_variance: f64,
    pub n_global_edges: usize,
    pub connected: bool,
}

/// Builds a network of the requested kind from the given random stream.
pub fn generate<R: Rng + ?Sized>(spec: &TopologySpec, rng: &mut R) -> Result<SocialNetwork> {
    spec.validate()?;
    let n = spec.n_agents;
    match spec.kind {
        TopologyKind::Ring => Ok(SocialNetwork::from_set_unchecked(n, ring_edges(n))),
        TopologyKind::Clique => {
            let edges = (0..n)
                .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
                .collect();
            Ok(SocialNetwork::from_set_unchecked(n, edges))
        }
        TopologyKind::Random => {
            let p = spec.param.unwrap_or_default();
            for _ in 0..MAX_REJECTIONS {
                let mut edges = BTreeSet::new();
                for a in 0..n {
                    for b in (a + 1)..n {
                        if rng.random::<f64>() < p {
                            edges.insert((a, b));
                        }
                    }
                }
                let net = SocialNetwork::from_set_unchecked(n, edges);
                if net.isolated_node().is_none() {
                    return Ok(net);
                }
            }
            Err(Error::DegenerateGenerator {
                kind: "random",
                param: p,
                attempts: MAX_REJECTIONS,
            })
        }
        TopologyKind::SmallWorld => {
            let p = spec.param.unwrap_or_default();
            let mut edges = ring_edges(n);
            // One proposal per node, aimed at a uniformly chosen non-neighbor.
            // A node already adjacent to everyone drops its proposal.
            for a in 0..n {
                if rng.random::<f64>() < p {
                    let candidates: Vec<usize> = (0..n)
                        .filter(|&b| b != a && !edges.contains(&(a.min(b), a.max(b))))
                        .collect();
                    if !candidates.is_empty() {
                        let b = candidates[rng.random_range(0..candidates.len())];
                        edges.insert((a.min(b), a.max(b)));
                    }
                }
            }
            Ok(SocialNetwork::from_set_unchecked(n, edges))
        }
    }
}

fn ring_edges(n: usize) -> BTreeSet<(usize, usize)> {
    (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            (i.min(j), i.max(j))
        })
        .collect()
}

/// Distance between two nodes along the canonical ring.
pub fn ring_distance(n: usize, a: usize, b: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

pub fn graph_stats(net: &SocialNetwork) -> GraphStats {
    let n = net.n() as f64;
    let avg_degree = 2.0 * net.edges().len() as f64 / n;
    let degree_variance = (0..net.n())
        .map(|i| (net.degree(i) as f64 - avg_degree).powi(2))
        .sum::<f64>()
        / n;
    let n_global_edges = net
        .edges()
        .iter()
        .filter(|&&(a, b)| ring_distance(net.n(), a, b) > 1)
        .count();
    GraphStats {
        avg_degree,
        degree_variance,
        n_global_edges,
        connected: is_connected(net),
    }
}

fn is_connected(net: &SocialNetwork) -> bool {
    let mut seen = vec![false; net.n()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &w in net.neighbors(v) {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Draws the first agent uniformly, then its partner uniformly among its neighbors.
pub fn sample_pair<R: Rng + ?Sized>(net: &SocialNetwork, rng: &mut R) -> (usize, usize) {
    let a = rng.random_range(0..net.n());
    let nb = net.neighbors(a);
    let b = nb[rng.random_range(0..nb.len())];
    (a, b)
}

/// Partner draw for a fixed first agent.
pub fn sample_partner<R: Rng + ?Sized>(net: &SocialNetwork, first: usize, rng: &mut R) -> usize {
    let nb = net.neighbors(first);
    nb[rng.random_range(0..nb.len())]
}
