//! Temporal multigraph of accounts and timestamped transfers.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

pub type AccountId = usize;
pub type EdgeId = usize;

/// Wei per ether.
pub const WEI_PER_ETH: f64 = 1e18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Label {
    Normal,
    Phishing,
    Scam,
    Unknown,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Normal, Label::Phishing, Label::Scam, Label::Unknown];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Phishing => "phishing",
            Label::Scam => "scam",
            Label::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Some(Label::Normal),
            "phishing" => Some(Label::Phishing),
            "scam" => Some(Label::Scam),
            "unknown" => Some(Label::Unknown),
            _ => None,
        }
    }

    /// Class index used by the classifier (`normal = 0, phishing = 1, scam = 2`).
    pub fn class_index(self) -> Option<usize> {
        match self {
            Label::Normal => Some(0),
            Label::Phishing => Some(1),
            Label::Scam => Some(2),
            Label::Unknown => None,
        }
    }

    pub fn from_class_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied().filter(|l| *l != Label::Unknown)
    }

    pub fn to_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Label> {
        Label::ALL.get(v as usize).copied()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Account {
    pub id: AccountId,
    pub address: String,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Transaction {
    pub from: AccountId,
    pub to: AccountId,
    /// Amount in wei.
    pub value: u128,
    /// Unix seconds.
    pub timestamp: u64,
    pub block: u64,
}

impl Transaction {
    pub fn value_eth(&self) -> f64 {
        self.value as f64 / WEI_PER_ETH
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    In,
    Out,
    Both,
}

/// One incident edge as seen from a query node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incident {
    pub neighbor: AccountId,
    pub edge: EdgeId,
    pub timestamp: u64,
    pub value: u128,
    /// `true` when the query node is the sender.
    pub outgoing: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: invalid address {address:?}")]
    InvalidAddress { line: usize, address: String },
    #[error("line {line}: timestamp {timestamp} decreases relative to an earlier block")]
    TimestampOrder { line: usize, timestamp: u64 },
    #[error("address {address} has conflicting labels {first} and {second}")]
    LabelConflict { address: String, first: Label, second: Label },
    #[error("unknown account id {0}")]
    UnknownAccount(AccountId),
    #[error("graph has no accounts")]
    EmptyGraph,
    #[error("graph has no edges")]
    AllIsolated,
}

/// Lowercases and validates a `0x`-prefixed 20-byte hex address.
pub fn normalize_address(raw: &str) -> Option<String> {
    let s = raw.trim();
    let hex = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X"))?;
    if hex.len() != 40 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    let mut out = String::with_capacity(42);
    out.push_str("0x");
    out.push_str(&hex.to_ascii_lowercase());
    Some(out)
}

/// Accounts are dense ids in insertion order; edges keep every parallel transfer.
///
/// Both adjacency lists are sorted by `(timestamp, edge id)`, which makes
/// time-window queries a pair of binary searches.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TemporalMultigraph {
    accounts: Vec<Account>,
    edges: Vec<Transaction>,
    out_adj: Vec<Vec<EdgeId>>,
    in_adj: Vec<Vec<EdgeId>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSummary {
    pub nodes: usize,
    pub edges: usize,
    pub labels: BTreeMap<Label, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeStats {
    /// Degree (distinct counterparties) to number of accounts.
    pub histogram: BTreeMap<usize, usize>,
    /// Discrete power-law exponent fitted over degrees `>= k_min`, if any exist.
    pub exponent: Option<f64>,
    pub k_min: usize,
    pub tail_size: usize,
}

impl TemporalMultigraph {
    /// Assembles a graph from already-resolved parts.
    ///
    /// Account ids must equal their position; edge endpoints must exist.
    pub fn from_parts(accounts: Vec<Account>, edges: Vec<Transaction>) -> Result<Self, GraphError> {
        for (i, a) in accounts.iter().enumerate() {
            if a.id != i {
                return Err(GraphError::UnknownAccount(a.id));
            }
        }
        let n = accounts.len();
        let mut out_adj = alloc::vec![Vec::new(); n];
        let mut in_adj = alloc::vec![Vec::new(); n];
        for (id, e) in edges.iter().enumerate() {
            if e.from >= n {
                return Err(GraphError::UnknownAccount(e.from));
            }
            if e.to >= n {
                return Err(GraphError::UnknownAccount(e.to));
            }
            out_adj[e.from].push(id);
            in_adj[e.to].push(id);
        }
        for list in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            list.sort_by_key(|&id| (edges[id].timestamp, id));
        }
        Ok(Self { accounts, edges, out_adj, in_adj })
    }

    pub fn accounts(&self) -> &[Account] {
        &self.accounts
    }

    pub fn edges(&self) -> &[Transaction] {
        &self.edges
    }

    pub fn num_accounts(&self) -> usize {
        self.accounts.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn account(&self, id: AccountId) -> Result<&Account, GraphError> {
        self.accounts.get(id).ok_or(GraphError::UnknownAccount(id))
    }

    pub fn edge(&self, id: EdgeId) -> &Transaction {
        &self.edges[id]
    }

    pub fn out_edges(&self, v: AccountId) -> &[EdgeId] {
        &self.out_adj[v]
    }

    pub fn in_edges(&self, v: AccountId) -> &[EdgeId] {
        &self.in_adj[v]
    }

    pub fn set_label(&mut self, id: AccountId, label: Label) -> Result<(), GraphError> {
        self.accounts.get_mut(id).ok_or(GraphError::UnknownAccount(id))?.label = label;
        Ok(())
    }

    pub fn summary(&self) -> GraphSummary {
        let mut labels = BTreeMap::new();
        for a in &self.accounts {
            *labels.entry(a.label).or_insert(0) += 1;
        }
        GraphSummary { nodes: self.accounts.len(), edges: self.edges.len(), labels }
    }

    /// Earliest timestamp over all incident edges of `v`.
    pub fn first_activity(&self, v: AccountId) -> Option<u64> {
        let first = |list: &[EdgeId]| list.first().map(|&e| self.edges[e].timestamp);
        match (first(&self.out_adj[v]), first(&self.in_adj[v])) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Mean gap between consecutive transfers over the whole graph, in seconds.
    pub fn mean_inter_event_gap(&self) -> Option<f64> {
        let (lo, hi) = self.edges.iter().fold((u64::MAX, 0u64), |(lo, hi), e| (lo.min(e.timestamp), hi.max(e.timestamp)));
        if self.edges.len() < 2 || hi <= lo {
            return None;
        }
        Some((hi - lo) as f64 / (self.edges.len() - 1) as f64)
    }

    fn window<'a>(&'a self, list: &'a [EdgeId], t_lo: u64, t_hi: u64) -> &'a [EdgeId] {
        let start = list.partition_point(|&e| self.edges[e].timestamp < t_lo);
        let end = list.partition_point(|&e| self.edges[e].timestamp < t_hi);
        &list[start..end.max(start)]
    }

    /// Incident edges of `v` with timestamp in `[t_lo, t_hi)`, ordered by
    /// timestamp then edge id.
    pub fn neighbors_in_window(
        &self,
        v: AccountId,
        t_lo: u64,
        t_hi: u64,
        direction: Direction,
    ) -> Result<Vec<Incident>, GraphError> {
        if v >= self.accounts.len() {
            return Err(GraphError::UnknownAccount(v));
        }
        let mut out = Vec::new();
        self.for_each_incident(v, t_lo, t_hi, direction, |inc| out.push(inc));
        Ok(out)
    }

    /// Visits the same edges as [`neighbors_in_window`](Self::neighbors_in_window)
    /// without allocating. `v` must be a valid id.
    pub fn for_each_incident(&self, v: AccountId, t_lo: u64, t_hi: u64, direction: Direction, mut f: impl FnMut(Incident)) {
        if t_hi <= t_lo {
            return;
        }
        let outs: &[EdgeId] = if direction != Direction::In { self.window(&self.out_adj[v], t_lo, t_hi) } else { &[] };
        let ins: &[EdgeId] = if direction != Direction::Out { self.window(&self.in_adj[v], t_lo, t_hi) } else { &[] };
        let key = |e: EdgeId| (self.edges[e].timestamp, e);
        let (mut i, mut j) = (0, 0);
        while i < outs.len() || j < ins.len() {
            let take_out = j >= ins.len() || (i < outs.len() && key(outs[i]) <= key(ins[j]));
            let (id, outgoing) = if take_out {
                i += 1;
                (outs[i - 1], true)
            } else {
                j += 1;
                (ins[j - 1], false)
            };
            let e = &self.edges[id];
            f(Incident {
                neighbor: if outgoing { e.to } else { e.from },
                edge: id,
                timestamp: e.timestamp,
                value: e.value,
                outgoing,
            });
        }
    }

    /// Number of distinct counterparties of `v`.
    pub fn degree(&self, v: AccountId) -> usize {
        let mut seen: Vec<AccountId> = self.out_adj[v]
            .iter()
            .map(|&e| self.edges[e].to)
            .chain(self.in_adj[v].iter().map(|&e| self.edges[e].from))
            .filter(|&u| u != v)
            .collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// Degree histogram and a discrete power-law exponent fit.
    ///
    /// Uses the standard discrete approximation
    /// `alpha = 1 + n / sum(ln(k / (k_min - 1/2)))` over degrees `k >= k_min`.
    pub fn degree_stats(&self, k_min: usize) -> Result<DegreeStats, GraphError> {
        if self.accounts.is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        if self.edges.iter().all(|e| e.from == e.to) {
            return Err(GraphError::AllIsolated);
        }
        let k_min = k_min.max(1);
        let mut histogram = BTreeMap::new();
        let mut log_sum = 0.0;
        let mut tail = 0usize;
        for v in 0..self.accounts.len() {
            let k = self.degree(v);
            *histogram.entry(k).or_insert(0) += 1;
            if k >= k_min {
                tail += 1;
                log_sum += libm::log(k as f64 / (k_min as f64 - 0.5));
            }
        }
        let exponent = (tail > 0 && log_sum > 0.0).then(|| 1.0 + tail as f64 / log_sum);
        Ok(DegreeStats { histogram, exponent, k_min, tail_size: tail })
    }
}

/// Incremental graph construction with the ingest-time validation rules:
/// addresses are normalized, self-loops dropped unless allowed, labels checked
/// for conflicts and timestamps checked to be non-decreasing in block number.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    allow_self_loops: bool,
    accounts: Vec<Account>,
    index: BTreeMap<String, AccountId>,
    edges: Vec<Transaction>,
    lines: Vec<usize>,
    explicit_labels: BTreeMap<AccountId, Label>,
    dropped_self_loops: usize,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn allow_self_loops(mut self, allow: bool) -> Self {
        self.allow_self_loops = allow;
        self
    }

    pub fn dropped_self_loops(&self) -> usize {
        self.dropped_self_loops
    }

    /// Returns the id for `address`, creating the account if needed.
    pub fn account(&mut self, address: &str, line: usize) -> Result<AccountId, GraphError> {
        let addr = normalize_address(address)
            .ok_or_else(|| GraphError::InvalidAddress { line, address: address.to_string() })?;
        if let Some(&id) = self.index.get(&addr) {
            return Ok(id);
        }
        let id = self.accounts.len();
        self.index.insert(addr.clone(), id);
        self.accounts.push(Account { id, address: addr, label: Label::Unknown });
        Ok(id)
    }

    pub fn add_transaction(
        &mut self,
        from: &str,
        to: &str,
        value: u128,
        timestamp: u64,
        block: u64,
        line: usize,
    ) -> Result<(), GraphError> {
        let from = self.account(from, line)?;
        let to = self.account(to, line)?;
        if from == to && !self.allow_self_loops {
            self.dropped_self_loops += 1;
            return Ok(());
        }
        self.edges.push(Transaction { from, to, value, timestamp, block });
        self.lines.push(line);
        Ok(())
    }

    /// Assigns a label; repeating the same label is fine, a different one is an error.
    pub fn label(&mut self, address: &str, label: Label, line: usize) -> Result<(), GraphError> {
        let id = self.account(address, line)?;
        if let Some(&prev) = self.explicit_labels.get(&id) {
            if prev != label {
                return Err(GraphError::LabelConflict {
                    address: self.accounts[id].address.clone(),
                    first: prev,
                    second: label,
                });
            }
        }
        self.explicit_labels.insert(id, label);
        self.accounts[id].label = label;
        Ok(())
    }

    pub fn finish(self) -> Result<TemporalMultigraph, GraphError> {
        check_block_time_order(&self.edges, &self.lines)?;
        TemporalMultigraph::from_parts(self.accounts, self.edges)
    }
}

/// Rejects the first row (in block order) whose timestamp is smaller than a
/// timestamp from a strictly earlier block.
fn check_block_time_order(edges: &[Transaction], lines: &[usize]) -> Result<(), GraphError> {
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.sort_by_key(|&i| (edges[i].block, lines[i]));
    let mut max_before_block = 0u64;
    let mut current_block = None;
    let mut max_in_block = 0u64;
    for i in order {
        let e = &edges[i];
        if current_block != Some(e.block) {
            max_before_block = max_before_block.max(max_in_block);
            max_in_block = 0;
            current_block = Some(e.block);
        }
        if e.timestamp < max_before_block {
            return Err(GraphError::TimestampOrder { line: lines[i], timestamp: e.timestamp });
        }
        max_in_block = max_in_block.max(e.timestamp);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    fn addr(i: usize) -> String {
        format!("0x{:040x}", i)
    }

    fn chain3() -> TemporalMultigraph {
        let mut b = GraphBuilder::new();
        b.add_transaction(&addr(1), &addr(2), 10, 100, 1, 2).unwrap();
        b.add_transaction(&addr(2), &addr(3), 20, 200, 2, 3).unwrap();
        b.finish().unwrap()
    }

    #[test]
    fn three_rows_three_nodes() {
        let mut b = GraphBuilder::new();
        b.add_transaction(&addr(0xa), &addr(0xb), 1, 1, 1, 2).unwrap();
        b.add_transaction(&addr(0xb), &addr(0xc), 1, 2, 2, 3).unwrap();
        b.add_transaction(&addr(0xa), &addr(0xc), 1, 3, 3, 4).unwrap();
        let g = b.finish().unwrap();
        assert_eq!((g.num_accounts(), g.num_edges()), (3, 3));
        assert!(g.accounts().iter().all(|a| a.label == Label::Unknown));
    }

    #[test]
    fn empty_builder_gives_empty_graph() {
        let g = GraphBuilder::new().finish().unwrap();
        assert_eq!(g.num_accounts(), 0);
        assert_eq!(g.degree_stats(3), Err(GraphError::EmptyGraph));
    }

    #[test]
    fn decreasing_timestamp_across_blocks_names_line() {
        let mut b = GraphBuilder::new();
        b.add_transaction(&addr(1), &addr(2), 1, 500, 10, 2).unwrap();
        b.add_transaction(&addr(2), &addr(3), 1, 400, 11, 3).unwrap();
        assert_eq!(b.finish(), Err(GraphError::TimestampOrder { line: 3, timestamp: 400 }));
    }

    #[test]
    fn self_loops_dropped_by_default() {
        let mut b = GraphBuilder::new();
        b.add_transaction(&addr(1), &addr(1), 1, 1, 1, 2).unwrap();
        assert_eq!(b.dropped_self_loops(), 1);
        assert_eq!(b.finish().unwrap().num_edges(), 0);

        let mut b = GraphBuilder::new().allow_self_loops(true);
        b.add_transaction(&addr(1), &addr(1), 1, 1, 1, 2).unwrap();
        assert_eq!(b.finish().unwrap().num_edges(), 1);
    }

    #[test]
    fn label_conflict_is_rejected() {
        let mut b = GraphBuilder::new();
        b.label(&addr(1), Label::Scam, 2).unwrap();
        b.label(&addr(1), Label::Scam, 3).unwrap();
        assert!(matches!(b.label(&addr(1), Label::Normal, 4), Err(GraphError::LabelConflict { .. })));
    }

    #[test]
    fn addresses_are_normalized() {
        assert_eq!(normalize_address("0xABCDEF0000000000000000000000000000000001").unwrap(), "0xabcdef0000000000000000000000000000000001");
        assert!(normalize_address("0x123").is_none());
        assert!(normalize_address("abcdef0000000000000000000000000000000001").is_none());
    }

    #[test]
    fn window_queries() {
        let g = chain3();
        let all = g.neighbors_in_window(1, 0, u64::MAX, Direction::Both).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!((all[0].neighbor, all[0].outgoing), (0, false));
        assert_eq!((all[1].neighbor, all[1].outgoing), (2, true));
        assert!(g.neighbors_in_window(1, 100, 100, Direction::Both).unwrap().is_empty());
        assert_eq!(g.neighbors_in_window(1, 100, 200, Direction::Both).unwrap().len(), 1);
        assert_eq!(g.neighbors_in_window(9, 0, 1, Direction::Both), Err(GraphError::UnknownAccount(9)));
    }

    #[test]
    fn chain_degree_histogram() {
        let stats = chain3().degree_stats(3).unwrap();
        assert_eq!(stats.histogram, BTreeMap::from([(1, 2), (2, 1)]));
        assert_eq!(stats.exponent, None);
    }

    #[test]
    fn star_degrees() {
        let mut b = GraphBuilder::new();
        for i in 1..=50 {
            b.add_transaction(&addr(0), &addr(i), 1, i as u64, i as u64, i).unwrap();
        }
        let g = b.finish().unwrap();
        let stats = g.degree_stats(3).unwrap();
        assert_eq!(g.degree(0), 50);
        assert_eq!(stats.histogram, BTreeMap::from([(1, 50), (50, 1)]));
    }

    #[test]
    fn parallel_edges_preserved_and_sorted() {
        let mut b = GraphBuilder::new();
        b.add_transaction(&addr(1), &addr(2), 1, 30, 3, 2).unwrap();
        b.add_transaction(&addr(1), &addr(2), 2, 10, 1, 3).unwrap();
        b.add_transaction(&addr(1), &addr(2), 3, 10, 1, 4).unwrap();
        let g = b.finish().unwrap();
        assert_eq!(g.out_edges(0), &[1, 2, 0]);
        assert_eq!(g.in_edges(1), &[1, 2, 0]);
        assert_eq!(g.degree(0), 1);
        assert_eq!(g.first_activity(1), Some(10));
    }

    #[test]
    fn from_parts_rejects_dangling_edges() {
        let accounts = vec![Account { id: 0, address: addr(0), label: Label::Normal }];
        let edges = vec![Transaction { from: 0, to: 3, value: 0, timestamp: 0, block: 0 }];
        assert_eq!(TemporalMultigraph::from_parts(accounts, edges), Err(GraphError::UnknownAccount(3)));
    }
}
