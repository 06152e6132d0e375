//! Fixed-shape numeric inputs for one subgraph.
//!
//! Every subgraph becomes an `(n_max + 1) x FEATURE_DIM` matrix: row 0 is the
//! anchor, rows `1..=n` its sampled neighbors and the remaining rows zero
//! padding. A neighbor row concatenates value features, time features and the
//! mean of the edge rows connecting it to the anchor. The anchor row is a
//! learned convex combination of the raw neighbor rows (see [`aggregate`]).

use alloc::vec;
use alloc::vec::Vec;

use crate::graph::AccountId;
use crate::walk::{Interval, Subgraph};

/// `[log10(1 + value_eth), normalized timestamp, outgoing flag]`.
pub const EDGE_DIM: usize = 3;
/// `[log10(1 + eth received), log10(1 + eth sent), edge count]`, seen from the neighbor.
pub const VALUE_DIM: usize = 3;
/// `[first-seen offset, last-seen offset, mean gap]`, as fractions of the interval.
pub const TIME_DIM: usize = 3;
pub const FEATURE_DIM: usize = VALUE_DIM + TIME_DIM + EDGE_DIM;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("{count} neighbors exceed n_max = {n_max}")]
    TooManyNeighbors { count: usize, n_max: usize },
    #[error("edge at {timestamp} outside interval [{lo}, {hi})")]
    EdgeOutsideInterval { timestamp: u64, lo: u64, hi: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFeatures {
    pub rows: Vec<[f64; EDGE_DIM]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    pub neighbors: Vec<AccountId>,
    pub value: Vec<[f64; VALUE_DIM]>,
    pub time: Vec<[f64; TIME_DIM]>,
    /// Mean edge-feature row per neighbor.
    pub edge: Vec<[f64; EDGE_DIM]>,
}

impl NodeFeatures {
    pub fn count(&self) -> usize {
        self.neighbors.len()
    }

    /// Concatenated raw row of neighbor `i`.
    pub fn raw_row(&self, i: usize) -> [f64; FEATURE_DIM] {
        let mut row = [0.0; FEATURE_DIM];
        row[..VALUE_DIM].copy_from_slice(&self.value[i]);
        row[VALUE_DIM..VALUE_DIM + TIME_DIM].copy_from_slice(&self.time[i]);
        row[VALUE_DIM + TIME_DIM..].copy_from_slice(&self.edge[i]);
        row
    }
}

fn log_eth(value_eth: f64) -> f64 {
    libm::log10(1.0 + value_eth)
}

fn offset(t: u64, interval: Interval) -> f64 {
    (t.saturating_sub(interval.lo)) as f64 / interval.width() as f64
}

/// One row per sampled edge.
pub fn build_edge_features(sg: &Subgraph, interval: Interval) -> Result<EdgeFeatures, FeatureError> {
    let mut rows = Vec::with_capacity(sg.edges.len());
    for e in &sg.edges {
        if !interval.contains(e.timestamp) {
            return Err(FeatureError::EdgeOutsideInterval { timestamp: e.timestamp, lo: interval.lo, hi: interval.hi });
        }
        let outgoing = if e.from == sg.anchor { 1.0 } else { 0.0 };
        rows.push([log_eth(e.value_eth()), offset(e.timestamp, interval), outgoing]);
    }
    Ok(EdgeFeatures { rows })
}

/// Per-neighbor statistics over the subgraph's sampled edges.
pub fn build_node_features(sg: &Subgraph, interval: Interval, ef: &EdgeFeatures) -> NodeFeatures {
    let neighbors: Vec<AccountId> = sg.nodes[1..].to_vec();
    let n = neighbors.len();
    let mut received = vec![0.0; n];
    let mut sent = vec![0.0; n];
    let mut count = vec![0usize; n];
    let mut first = vec![u64::MAX; n];
    let mut last = vec![0u64; n];
    let mut edge_sum = vec![[0.0; EDGE_DIM]; n];
    for (e, row) in sg.edges.iter().zip(&ef.rows) {
        let other = if e.from == sg.anchor { e.to } else { e.from };
        let Some(i) = neighbors.iter().position(|&u| u == other) else {
            continue;
        };
        if e.to == other {
            received[i] += e.value_eth();
        } else {
            sent[i] += e.value_eth();
        }
        count[i] += 1;
        first[i] = first[i].min(e.timestamp);
        last[i] = last[i].max(e.timestamp);
        for (s, v) in edge_sum[i].iter_mut().zip(row) {
            *s += v;
        }
    }
    let mut value = Vec::with_capacity(n);
    let mut time = Vec::with_capacity(n);
    let mut edge = Vec::with_capacity(n);
    for i in 0..n {
        let c = count[i].max(1) as f64;
        value.push([log_eth(received[i]), log_eth(sent[i]), count[i] as f64]);
        let gap = if count[i] > 1 { (last[i] - first[i]) as f64 / (count[i] - 1) as f64 / interval.width() as f64 } else { 0.0 };
        let (f, l) = if count[i] > 0 { (offset(first[i], interval), offset(last[i], interval)) } else { (0.0, 0.0) };
        time.push([f, l, gap]);
        edge.push(edge_sum[i].map(|s| s / c));
    }
    NodeFeatures { neighbors, value, time, edge }
}

/// Softmax of `weights[..n]` applied to the first `n` rows of a row-major
/// `rows x k` matrix. `n = 0` gives a zero row.
pub fn aggregate(weights: &[f64], matrix: &[f64], k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k];
    if n == 0 {
        return out;
    }
    let max = weights[..n].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = weights[..n].iter().map(|w| libm::exp(w - max)).collect();
    let total: f64 = exp.iter().sum();
    for (i, e) in exp.iter().enumerate() {
        for (o, v) in out.iter_mut().zip(&matrix[i * k..(i + 1) * k]) {
            *o += e / total * v;
        }
    }
    out
}

/// Neighbor rows of one subgraph, before and after alignment, both padded to
/// `n_max` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSubgraph {
    pub count: usize,
    pub n_max: usize,
    /// Raw concatenated rows; input to the anchor aggregation.
    pub raw: Vec<f64>,
    /// Min-max normalized, LeakyReLU-activated rows.
    pub aligned: Vec<f64>,
}

impl AlignedSubgraph {
    /// Full `(n_max + 1) x FEATURE_DIM` matrix with the given anchor row on top.
    pub fn matrix_with_anchor(&self, anchor: &[f64]) -> Vec<f64> {
        let mut m = Vec::with_capacity((self.n_max + 1) * FEATURE_DIM);
        m.extend_from_slice(anchor);
        m.extend_from_slice(&self.aligned);
        m
    }

    /// Row mask over the full matrix: anchor plus the true neighbors.
    pub fn row_mask(&self) -> Vec<bool> {
        (0..=self.n_max).map(|i| i <= self.count).collect()
    }
}

/// Per-column min-max normalization over the true rows, LeakyReLU, then zero
/// padding to `n_max` rows. Constant columns normalize to zero.
pub fn align_neighbors(nf: &NodeFeatures, n_max: usize, slope: f64) -> Result<AlignedSubgraph, FeatureError> {
    let n = nf.count();
    if n > n_max {
        return Err(FeatureError::TooManyNeighbors { count: n, n_max });
    }
    let mut raw = vec![0.0; n_max * FEATURE_DIM];
    for i in 0..n {
        raw[i * FEATURE_DIM..(i + 1) * FEATURE_DIM].copy_from_slice(&nf.raw_row(i));
    }
    let mut aligned = vec![0.0; n_max * FEATURE_DIM];
    for c in 0..FEATURE_DIM {
        let col = (0..n).map(|i| raw[i * FEATURE_DIM + c]);
        let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        for i in 0..n {
            let v = raw[i * FEATURE_DIM + c];
            let scaled = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
            aligned[i * FEATURE_DIM + c] = if scaled > 0.0 { scaled } else { slope * scaled };
        }
    }
    Ok(AlignedSubgraph { count: n, n_max, raw, aligned })
}

/// All three steps for one subgraph.
pub fn subgraph_features(sg: &Subgraph, interval: Interval, n_max: usize, slope: f64) -> Result<AlignedSubgraph, FeatureError> {
    let ef = build_edge_features(sg, interval)?;
    let nf = build_node_features(sg, interval, &ef);
    align_neighbors(&nf, n_max, slope)
}
