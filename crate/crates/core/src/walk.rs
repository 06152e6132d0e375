//! Structure-temporal random walk.
//!
//! A walk alternates two moves. The temporal move picks the next edge among
//! the current node's edges that are not earlier than the current time,
//! favoring small forward gaps. The structural move samples, for the
//! interval containing that edge, a bounded set of the anchor's edges in the
//! interval, weighted towards large transfers. Each non-empty interval yields
//! one [`Subgraph`]; the ordered list is a [`SubgraphSequence`].

use alloc::vec::Vec;

use rand::Rng;

use crate::graph::{AccountId, Direction, EdgeId, GraphError, Incident, TemporalMultigraph, WEI_PER_ETH};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum WalkDirection {
    Out,
    Both,
}

impl From<WalkDirection> for Direction {
    fn from(d: WalkDirection) -> Self {
        match d {
            WalkDirection::Out => Direction::Out,
            WalkDirection::Both => Direction::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct WalkConfig {
    /// Maximum number of temporal moves.
    pub max_walk_len: usize,
    /// Cap on edges sampled per structural move.
    pub structural_window: usize,
    /// Interval width in seconds.
    pub interval_width: u64,
    /// Temperature of the temporal softmax, in seconds.
    pub tau: f64,
    /// Cap on the number of subgraphs per sequence.
    pub max_intervals: usize,
    pub seed: u64,
    pub direction: WalkDirection,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            max_walk_len: 64,
            structural_window: 10,
            interval_width: 86_400,
            tau: 3_600.0,
            max_intervals: 32,
            seed: 0,
            direction: WalkDirection::Both,
        }
    }
}

impl WalkConfig {
    /// Default configuration with `tau` set to the graph's mean inter-event gap.
    pub fn for_graph(g: &TemporalMultigraph) -> Self {
        let mut cfg = Self::default();
        if let Some(gap) = g.mean_inter_event_gap() {
            cfg.tau = gap;
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), WalkError> {
        if self.max_walk_len == 0 {
            return Err(WalkError::InvalidConfig("max_walk_len must be >= 1"));
        }
        if self.structural_window == 0 {
            return Err(WalkError::InvalidConfig("structural_window must be >= 1"));
        }
        if self.interval_width == 0 {
            return Err(WalkError::InvalidConfig("interval_width must be > 0"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(WalkError::InvalidConfig("tau must be positive"));
        }
        if self.max_intervals == 0 {
            return Err(WalkError::InvalidConfig("max_intervals must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WalkError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid walk config: {0}")]
    InvalidConfig(&'static str),
    #[error("no start nodes given")]
    EmptyStarts,
    #[error("sequence invariant violated: {0}")]
    Invariant(&'static str),
}

/// Half-open time range `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Interval {
    pub lo: u64,
    pub hi: u64,
}

impl Interval {
    pub fn contains(&self, t: u64) -> bool {
        self.lo <= t && t < self.hi
    }

    pub fn width(&self) -> u64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampledEdge {
    pub edge: EdgeId,
    pub from: AccountId,
    pub to: AccountId,
    pub value: u128,
    pub timestamp: u64,
}

impl SampledEdge {
    pub fn value_eth(&self) -> f64 {
        self.value as f64 / WEI_PER_ETH
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Subgraph {
    pub anchor: AccountId,
    /// Anchor first, then neighbors in order of their first sampled edge.
    pub nodes: Vec<AccountId>,
    /// Sampled edges ordered by `(timestamp, edge id)`.
    pub edges: Vec<SampledEdge>,
}

impl Subgraph {
    pub fn singleton(anchor: AccountId) -> Self {
        Self { anchor, nodes: alloc::vec![anchor], edges: Vec::new() }
    }

    pub fn neighbor_count(&self) -> usize {
        self.nodes.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubgraphSequence {
    pub start: AccountId,
    pub subgraphs: Vec<Subgraph>,
    pub intervals: Vec<Interval>,
}

impl SubgraphSequence {
    pub fn len(&self) -> usize {
        self.subgraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgraphs.is_empty()
    }

    /// Checks ordering, non-emptiness, containment and size caps.
    pub fn validate(&self, structural_window: usize, max_intervals: usize) -> Result<(), WalkError> {
        if self.subgraphs.len() != self.intervals.len() {
            return Err(WalkError::Invariant("one interval per subgraph"));
        }
        if self.subgraphs.len() > max_intervals {
            return Err(WalkError::Invariant("too many intervals"));
        }
        for (i, (sg, iv)) in self.subgraphs.iter().zip(&self.intervals).enumerate() {
            if iv.hi <= iv.lo {
                return Err(WalkError::Invariant("degenerate interval"));
            }
            if let Some(next) = self.intervals.get(i + 1) {
                if iv.hi > next.lo {
                    return Err(WalkError::Invariant("intervals out of order"));
                }
            }
            if sg.edges.is_empty() {
                return Err(WalkError::Invariant("empty subgraph"));
            }
            if sg.nodes.first() != Some(&sg.anchor) {
                return Err(WalkError::Invariant("anchor must be the first node"));
            }
            if sg.nodes.len() > structural_window + 1 || sg.edges.len() > structural_window {
                return Err(WalkError::Invariant("subgraph exceeds structural window"));
            }
            if sg.edges.iter().any(|e| !iv.contains(e.timestamp)) {
                return Err(WalkError::Invariant("edge outside its interval"));
            }
            if sg.edges.iter().any(|e| !sg.nodes.contains(&e.from) || !sg.nodes.contains(&e.to)) {
                return Err(WalkError::Invariant("edge endpoint outside subgraph"));
            }
        }
        Ok(())
    }
}

/// Draws an index with probability proportional to `weights`.
fn draw<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    // Rounding can leave `target` marginally above the final partial sum.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
}

/// Temporal move from `v` at time `t_cur`.
///
/// Candidates are `v`'s edges (in `cfg.direction`) with timestamp `>= t_cur`,
/// minus `exclude` (the edge just traversed). Edge `j` is chosen with
/// probability `softmax(-(t_j - t_cur) / tau)`. Returns `None` when there is no
/// candidate.
pub fn temporal_step<R: Rng + ?Sized>(
    g: &TemporalMultigraph,
    v: AccountId,
    t_cur: u64,
    exclude: Option<EdgeId>,
    cfg: &WalkConfig,
    rng: &mut R,
) -> Option<(AccountId, EdgeId)> {
    let mut cands: Vec<Incident> = Vec::new();
    g.for_each_incident(v, t_cur, u64::MAX, cfg.direction.into(), |inc| {
        if Some(inc.edge) != exclude {
            cands.push(inc);
        }
    });
    if cands.is_empty() {
        return None;
    }
    // Candidates are sorted by time, so the first has the smallest gap.
    let t0 = cands[0].timestamp;
    let weights: Vec<f64> = cands
        .iter()
        .map(|c| libm::exp(-((c.timestamp - t0) as f64) / cfg.tau))
        .collect();
    let total = weights.iter().sum();
    let pick = &cands[draw(&weights, total, rng)];
    Some((pick.neighbor, pick.edge))
}

/// Structural move: samples up to `cfg.structural_window` of `anchor`'s edges
/// in `interval`, without replacement, with weights `softmax(log1p(value_eth))`.
pub fn structural_step<R: Rng + ?Sized>(
    g: &TemporalMultigraph,
    anchor: AccountId,
    interval: Interval,
    cfg: &WalkConfig,
    rng: &mut R,
) -> Subgraph {
    let mut cands: Vec<Incident> = Vec::new();
    g.for_each_incident(anchor, interval.lo, interval.hi, Direction::Both, |inc| cands.push(inc));
    if cands.is_empty() {
        return Subgraph::singleton(anchor);
    }
    let mut picked: Vec<Incident> = if cands.len() <= cfg.structural_window {
        cands
    } else {
        let logits: Vec<f64> = cands.iter().map(|c| libm::log1p(c.value as f64 / WEI_PER_ETH)).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = logits.iter().map(|l| libm::exp(l - max)).collect();
        let mut chosen = Vec::with_capacity(cfg.structural_window);
        for _ in 0..cfg.structural_window {
            let total: f64 = weights.iter().sum();
            let i = draw(&weights, total, rng);
            weights[i] = 0.0;
            chosen.push(cands[i]);
        }
        chosen.sort_by_key(|c| (c.timestamp, c.edge));
        chosen
    };
    picked.dedup_by_key(|c| c.edge);
    let mut nodes = alloc::vec![anchor];
    for c in &picked {
        if !nodes.contains(&c.neighbor) {
            nodes.push(c.neighbor);
        }
    }
    let edges = picked
        .iter()
        .map(|c| {
            let e = g.edge(c.edge);
            SampledEdge { edge: c.edge, from: e.from, to: e.to, value: e.value, timestamp: e.timestamp }
        })
        .collect();
    Subgraph { anchor, nodes, edges }
}

/// Interval `index` of a walk whose first timestamp is `t_first`.
pub fn interval_bounds(t_first: u64, width: u64, index: u64) -> Interval {
    let lo = t_first.saturating_add(index.saturating_mul(width));
    Interval { lo, hi: lo.saturating_add(width) }
}

/// Runs one walk from `v0` using `cfg.seed`.
pub fn run_walk(g: &TemporalMultigraph, v0: AccountId, cfg: &WalkConfig) -> Result<SubgraphSequence, WalkError> {
    cfg.validate()?;
    g.account(v0)?;
    Ok(walk_with_rng(g, v0, cfg, &mut seeding::rng(cfg.seed)))
}

fn walk_with_rng<R: Rng + ?Sized>(g: &TemporalMultigraph, v0: AccountId, cfg: &WalkConfig, rng: &mut R) -> SubgraphSequence {
    let mut seq = SubgraphSequence { start: v0, subgraphs: Vec::new(), intervals: Vec::new() };
    let Some(t_first) = g.first_activity(v0) else {
        return seq;
    };
    let mut anchor = v0;
    let mut t_cur = t_first;
    let mut last_edge = None;
    let mut last_index: Option<u64> = None;
    for _ in 0..cfg.max_walk_len {
        let Some((next, edge)) = temporal_step(g, anchor, t_cur, last_edge, cfg, rng) else {
            break;
        };
        let t = g.edge(edge).timestamp;
        let index = (t - t_first) / cfg.interval_width;
        if last_index.map_or(true, |prev| index > prev) {
            let interval = interval_bounds(t_first, cfg.interval_width, index);
            seq.subgraphs.push(structural_step(g, anchor, interval, cfg, rng));
            seq.intervals.push(interval);
            last_index = Some(index);
            if seq.subgraphs.len() == cfg.max_intervals {
                break;
            }
        }
        anchor = next;
        t_cur = t;
        last_edge = Some(edge);
    }
    seq
}

/// `walks_per_node` walks for every start, in start-major order. Walk `k` of
/// node `v` uses seed `cfg.seed ^ hash(v, k)`.
pub fn sample_dataset(
    g: &TemporalMultigraph,
    starts: &[AccountId],
    cfg: &WalkConfig,
    walks_per_node: usize,
) -> Result<Vec<SubgraphSequence>, WalkError> {
    cfg.validate()?;
    if starts.is_empty() {
        return Err(WalkError::EmptyStarts);
    }
    for &v in starts {
        g.account(v)?;
    }
    let mut out = Vec::with_capacity(starts.len() * walks_per_node);
    for &v in starts {
        for k in 0..walks_per_node {
            out.push(walk_for(g, v, k, cfg));
        }
    }
    Ok(out)
}

/// Walk `k` of start `v`, independent of every other walk. Lets callers
/// parallelize [`sample_dataset`] without changing its output.
pub fn walk_for(g: &TemporalMultigraph, v: AccountId, k: usize, cfg: &WalkConfig) -> SubgraphSequence {
    let seed = seeding::derive_seed(cfg.seed, v as u64, k as u64);
    walk_with_rng(g, v, cfg, &mut seeding::rng(seed))
}
