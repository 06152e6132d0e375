//! Seeded synthetic transaction networks with labeled phishing and mimic-scam
//! accounts.
//!
//! Background accounts form a preferential-attachment graph whose links carry
//! Poisson-timed repeated transfers. Motif principals are separate accounts
//! that only transact through their motif:
//!
//! * phishing funnel: many victims pay in a short burst, then one large
//!   cash-out to a fresh account;
//! * mimic scam: service-like two-way traffic with counterparties plus
//!   periodic outflows split across fresh intermediates that forward the
//!   funds hop by hop to a sink;
//! * normal activity (decoys, labeled normal): a merchant with the same
//!   fan-in spread over weeks and periodic withdrawals to an exchange-like
//!   hub, or a service with the same two-way traffic paying its outflows
//!   directly to established accounts.
//!
//! Decoys are sized like the malicious motifs so that degree and value totals
//! alone do not separate the classes.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Exp, LogNormal};

use crate::graph::{Account, AccountId, EdgeId, GraphError, Label, TemporalMultigraph, Transaction, WEI_PER_ETH};
use crate::seeding::{self, derive_seed, mix64, Rng};

const DAY: f64 = 86_400.0;
const HOUR: f64 = 3_600.0;
const BLOCK_SECONDS: u64 = 12;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SynthConfig {
    /// Background plus principal accounts; fresh motif accounts come on top.
    pub n_accounts: usize,
    pub attachment_m: usize,
    pub duration_days: u32,
    pub phishing_count: usize,
    pub scam_count: usize,
    /// Normal-activity motifs, alternating merchant and service.
    pub decoy_count: usize,
    /// Background transfer value, lognormal parameters in ETH.
    pub value_mu: f64,
    pub value_sigma: f64,
    /// Expected transfers per background link per day.
    pub link_rate: f64,
    pub motif: MotifParams,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_accounts: 2_000,
            attachment_m: 2,
            duration_days: 120,
            phishing_count: 60,
            scam_count: 60,
            decoy_count: 120,
            value_mu: -2.0,
            value_sigma: 1.5,
            link_rate: 0.03,
            motif: MotifParams::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MotifParams {
    /// Inclusive range of paying victims or customers.
    pub fan_in: (usize, usize),
    pub burst_hours: f64,
    /// Active span of every motif.
    pub active_days: f64,
    /// Inclusive range of two-way counterparties.
    pub counterparties: (usize, usize),
    /// Inclusive range of days between outflows.
    pub outflow_every_days: (f64, f64),
    /// Inclusive range of intermediate hops per layered chain.
    pub layer_depth: (usize, usize),
    /// Inclusive range of parts each outflow is split into.
    pub split: (usize, usize),
    pub jitter_hours: f64,
    /// Lognormal parameters (ETH) of payments into a motif principal.
    pub deposit_mu: f64,
    pub deposit_sigma: f64,
}

impl Default for MotifParams {
    fn default() -> Self {
        Self {
            fan_in: (8, 20),
            burst_hours: 36.0,
            active_days: 30.0,
            counterparties: (5, 10),
            outflow_every_days: (1.0, 2.5),
            layer_depth: (2, 4),
            split: (2, 3),
            jitter_hours: 6.0,
            deposit_mu: -0.5,
            deposit_sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("infeasible config: {0}")]
    Infeasible(&'static str),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl SynthConfig {
    pub fn principals(&self) -> usize {
        self.phishing_count + self.scam_count + self.decoy_count
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let m = &self.motif;
        let background = self.n_accounts.saturating_sub(self.principals());
        let checks = [
            (self.attachment_m >= 1, "attachment_m must be >= 1"),
            (self.phishing_count + self.scam_count < self.n_accounts, "more motif principals than accounts"),
            (self.principals() < self.n_accounts, "more motif principals than accounts"),
            (background > self.attachment_m + m.fan_in.1.max(m.counterparties.1 + m.split.1), "too few background accounts for the motifs"),
            (self.duration_days >= 1 && (self.duration_days as f64) > m.active_days + 1.0, "duration must exceed the motif span"),
            (self.value_sigma >= 0.0 && m.deposit_sigma >= 0.0, "sigma must be non-negative"),
            (self.link_rate > 0.0, "link_rate must be positive"),
            (m.fan_in.0 >= 1 && m.fan_in.0 <= m.fan_in.1, "fan_in range invalid"),
            (m.counterparties.0 >= 1 && m.counterparties.0 <= m.counterparties.1, "counterparties range invalid"),
            (m.layer_depth.0 >= 1 && m.layer_depth.0 <= m.layer_depth.1, "layer_depth range invalid"),
            (m.split.0 >= 1 && m.split.0 <= m.split.1, "split range invalid"),
            (m.outflow_every_days.0 > 0.0 && m.outflow_every_days.0 <= m.outflow_every_days.1, "outflow period invalid"),
            (m.burst_hours > 0.0 && m.active_days > 0.0 && m.jitter_hours >= 0.0, "motif timings must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(SynthError::Infeasible(msg));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MotifKind {
    NormalActivity,
    PhishingFunnel,
    MimicScam,
}

impl MotifKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MotifKind::NormalActivity => "normal_activity",
            MotifKind::PhishingFunnel => "phishing_funnel",
            MotifKind::MimicScam => "mimic_scam",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MotifRole {
    /// Payment into the principal from a victim or customer.
    Deposit,
    /// Principal paying a counterparty back.
    Payout,
    CashOut,
    Withdrawal,
    /// Hop `n` of a layered chain (1 = principal to first intermediate).
    Layer(u8),
}

impl MotifRole {
    pub fn name(self) -> String {
        match self {
            MotifRole::Deposit => "deposit".into(),
            MotifRole::Payout => "payout".into(),
            MotifRole::CashOut => "cash_out".into(),
            MotifRole::Withdrawal => "withdrawal".into(),
            MotifRole::Layer(n) => format!("layer{n}"),
        }
    }
}

/// One injected edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MotifEdge {
    pub edge: EdgeId,
    pub kind: MotifKind,
    pub role: MotifRole,
    pub principal: AccountId,
    /// Outflow chain the edge belongs to, for layered edges.
    pub chain: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub graph: TemporalMultigraph,
    pub motifs: Vec<MotifEdge>,
    /// Principal account of every injected motif and its kind.
    pub principals: Vec<(AccountId, MotifKind)>,
}

impl SynthOutput {
    pub fn principals_of(&self, kind: MotifKind) -> impl Iterator<Item = AccountId> + '_ {
        self.principals.iter().filter(move |p| p.1 == kind).map(|p| p.0)
    }
}

struct Pending {
    from: AccountId,
    to: AccountId,
    eth: f64,
    time: f64,
    tag: Option<(MotifKind, MotifRole, AccountId, Option<u32>)>,
}

struct Gen<'a> {
    cfg: &'a SynthConfig,
    rng: Rng,
    txs: Vec<Pending>,
    labels: Vec<Label>,
    end: f64,
    /// Background account join times.
    joined: Vec<f64>,
}

impl Gen<'_> {
    fn fresh(&mut self) -> AccountId {
        self.labels.push(Label::Unknown);
        self.labels.len() - 1
    }

    fn uniform_usize(&mut self, range: (usize, usize)) -> usize {
        self.rng.random_range(range.0..=range.1)
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi > lo {
            self.rng.random_range(lo..hi)
        } else {
            lo
        }
    }

    fn deposit_value(&mut self) -> f64 {
        let m = &self.cfg.motif;
        LogNormal::new(m.deposit_mu, m.deposit_sigma).expect("validated").sample(&mut self.rng)
    }

    fn push(&mut self, from: AccountId, to: AccountId, eth: f64, time: f64, tag: (MotifKind, MotifRole, AccountId, Option<u32>)) {
        let time = time.clamp(0.0, self.end);
        self.txs.push(Pending { from, to, eth, time, tag: Some(tag) });
    }

    /// Background accounts that joined before `t`, `k` of them without repetition.
    fn pick_background(&mut self, t: f64, k: usize) -> Vec<AccountId> {
        let available = self.joined.partition_point(|&j| j < t).max(k.min(self.joined.len()));
        index::sample(&mut self.rng, available, k.min(available)).into_iter().collect()
    }

    fn background(&mut self) {
        let cfg = self.cfg;
        let n = self.joined.len();
        let m = cfg.attachment_m;
        let value = LogNormal::new(cfg.value_mu, cfg.value_sigma).expect("validated");
        let gap = Exp::new(cfg.link_rate / DAY).expect("validated");
        // Endpoint list: each account appears once per incident link.
        let mut ends: Vec<AccountId> = Vec::new();
        let mut links: Vec<(AccountId, AccountId)> = Vec::new();
        for i in 1..=m.min(n - 1) {
            for j in 0..i {
                links.push((i, j));
                ends.extend([i, j]);
            }
        }
        for v in (m + 1)..n {
            let mut targets: Vec<AccountId> = Vec::with_capacity(m);
            while targets.len() < m {
                let t = ends[self.rng.random_range(0..ends.len())];
                if !targets.contains(&t) {
                    targets.push(t);
                }
            }
            for t in targets {
                links.push((v, t));
                ends.extend([v, t]);
            }
        }
        for (a, b) in links {
            let start = self.joined[a].max(self.joined[b]);
            let mut t = start + gap.sample(&mut self.rng);
            let mut any = false;
            while t < self.end || !any {
                let t_use = if t < self.end { t } else { self.uniform(start, self.end) };
                let (from, to) = if self.rng.random_bool(0.5) { (a, b) } else { (b, a) };
                let eth = value.sample(&mut self.rng);
                self.txs.push(Pending { from, to, eth, time: t_use, tag: None });
                any = true;
                t += gap.sample(&mut self.rng);
            }
        }
    }

    fn phishing(&mut self, p: AccountId, start: f64) {
        let mp = self.cfg.motif.clone();
        let kind = MotifKind::PhishingFunnel;
        let k = self.uniform_usize(mp.fan_in);
        let mut total = 0.0;
        let mut last = start;
        for victim in self.pick_background(start, k) {
            let t = start + self.uniform(0.0, mp.burst_hours * HOUR);
            let eth = self.deposit_value();
            total += eth;
            last = last.max(t);
            self.push(victim, p, eth, t, (kind, MotifRole::Deposit, p, None));
        }
        let collector = self.fresh();
        let t = last + self.uniform(1.0 * HOUR, 12.0 * HOUR);
        self.push(p, collector, 0.95 * total, t, (kind, MotifRole::CashOut, p, None));
    }

    fn merchant(&mut self, p: AccountId, start: f64) {
        let mp = self.cfg.motif.clone();
        let kind = MotifKind::NormalActivity;
        let k = self.uniform_usize(mp.fan_in);
        let span = mp.active_days * DAY;
        let mut payments: Vec<(f64, f64)> = Vec::with_capacity(k);
        for customer in self.pick_background(start, k) {
            let t = start + self.uniform(0.0, span);
            let eth = self.deposit_value();
            payments.push((t, eth));
            self.push(customer, p, eth, t, (kind, MotifRole::Deposit, p, None));
        }
        let hub = self.rng.random_range(0..=self.cfg.attachment_m);
        let mut t = start;
        let mut withdrawn = 0.0;
        loop {
            t += self.uniform(mp.outflow_every_days.0, mp.outflow_every_days.1) * 1.5 * DAY;
            let last = t >= start + span;
            let cut = if last { f64::INFINITY } else { t };
            let received: f64 = payments.iter().filter(|(pt, _)| *pt < cut).map(|(_, e)| e).sum();
            let due = 0.95 * received - withdrawn;
            if due > 0.0 {
                let at = if last { payments.iter().map(|(pt, _)| *pt).fold(t, f64::max) + HOUR } else { t };
                self.push(p, hub, due, at, (kind, MotifRole::Withdrawal, p, None));
                withdrawn += due;
            }
            if last {
                break;
            }
        }
    }

    /// Two-way traffic shared by scams and service decoys; returns the
    /// deposit schedule `(time, eth)`.
    fn service_traffic(&mut self, p: AccountId, start: f64, kind: MotifKind) -> Vec<(f64, f64)> {
        let mp = self.cfg.motif.clone();
        let c = self.uniform_usize(mp.counterparties);
        let span = mp.active_days * DAY;
        let mut deposits = Vec::new();
        for cp in self.pick_background(start, c) {
            for _ in 0..self.rng.random_range(2..=4) {
                let t = start + self.uniform(0.0, span);
                let eth = self.deposit_value();
                deposits.push((t, eth));
                self.push(cp, p, eth, t, (kind, MotifRole::Deposit, p, None));
            }
            for _ in 0..self.rng.random_range(1..=2) {
                let t = start + self.uniform(0.0, span);
                let eth = 0.3 * self.deposit_value();
                self.push(p, cp, eth, t, (kind, MotifRole::Payout, p, None));
            }
        }
        deposits
    }

    /// Outflow times and amounts: every few days, most of what came in since the last one.
    fn outflow_schedule(&mut self, start: f64, deposits: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let mp = self.cfg.motif.clone();
        let span = mp.active_days * DAY;
        let mut out = Vec::new();
        let mut t = start + self.uniform(0.5 * DAY, 1.5 * DAY);
        let mut prev = f64::NEG_INFINITY;
        while t < start + span {
            let inflow: f64 = deposits.iter().filter(|(dt, _)| *dt >= prev && *dt < t).map(|(_, e)| e).sum();
            if inflow > 0.0 {
                out.push((t, 0.8 * inflow));
            }
            prev = t;
            t += self.uniform(mp.outflow_every_days.0, mp.outflow_every_days.1) * DAY;
        }
        out
    }

    fn split_amount(&mut self, total: f64) -> Vec<f64> {
        let parts = self.uniform_usize(self.cfg.motif.split);
        let raw: Vec<f64> = (0..parts).map(|_| self.uniform(0.5, 1.5)).collect();
        let sum: f64 = raw.iter().sum();
        raw.iter().map(|r| total * r / sum).collect()
    }

    fn scam(&mut self, p: AccountId, start: f64) {
        let kind = MotifKind::MimicScam;
        let jitter = self.cfg.motif.jitter_hours * HOUR;
        let depth_range = self.cfg.motif.layer_depth;
        let deposits = self.service_traffic(p, start, kind);
        let sink = self.fresh();
        let mut chain = 0u32;
        for (t, amount) in self.outflow_schedule(start, &deposits) {
            for part in self.split_amount(amount) {
                let depth = self.uniform_usize(depth_range);
                let mut from = p;
                let mut at = t + self.uniform(-jitter, jitter).max(-(t - start));
                let mut eth = part;
                for hop in 0..=depth {
                    let to = if hop == depth { sink } else { self.fresh() };
                    self.push(from, to, eth, at, (kind, MotifRole::Layer(hop as u8 + 1), p, Some(chain)));
                    from = to;
                    eth *= 0.995;
                    at += self.uniform(10.0 * 60.0, jitter.max(20.0 * 60.0));
                }
                chain += 1;
            }
        }
    }

    fn service(&mut self, p: AccountId, start: f64) {
        let kind = MotifKind::NormalActivity;
        let jitter = self.cfg.motif.jitter_hours * HOUR;
        let deposits = self.service_traffic(p, start, kind);
        for (t, amount) in self.outflow_schedule(start, &deposits) {
            let parts = self.split_amount(amount);
            let suppliers = self.pick_background(t, parts.len());
            for (part, to) in parts.into_iter().zip(suppliers) {
                let at = t + self.uniform(-jitter, jitter).max(-(t - start));
                self.push(p, to, part, at, (kind, MotifRole::Withdrawal, p, None));
            }
        }
    }
}

fn address(seed: u64, id: AccountId) -> String {
    format!("0x{:08x}{:016x}{:016x}", mix64(seed) as u32, mix64(seed ^ mix64(id as u64)), id as u64)
}

/// Generates a labeled graph and the log of every injected motif edge.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;
    let principals = cfg.principals();
    let n_bg = cfg.n_accounts - principals;
    let end = cfg.duration_days as f64 * DAY;
    let mut rng = seeding::rng(derive_seed(cfg.seed, 0x5359_4e54, 0));
    // Background accounts join over the first 60% of the timeline, seeds at 0.
    let joined: Vec<f64> = (0..n_bg)
        .map(|i| if i <= cfg.attachment_m { 0.0 } else { 0.6 * end * i as f64 / n_bg as f64 })
        .collect();
    let mut labels = vec![Label::Normal; cfg.n_accounts];
    let mut kinds = Vec::with_capacity(principals);
    for i in 0..principals {
        let kind = if i < cfg.phishing_count {
            labels[n_bg + i] = Label::Phishing;
            MotifKind::PhishingFunnel
        } else if i < cfg.phishing_count + cfg.scam_count {
            labels[n_bg + i] = Label::Scam;
            MotifKind::MimicScam
        } else {
            MotifKind::NormalActivity
        };
        kinds.push((n_bg + i, kind));
    }
    rng = seeding::rng(rng.random());
    let mut g = Gen { cfg, rng, txs: Vec::new(), labels, end, joined };
    g.background();
    let latest_start = end - cfg.motif.active_days * DAY - DAY;
    for (slot, &(p, kind)) in kinds.iter().enumerate() {
        let start = g.uniform(0.1 * end, latest_start);
        match kind {
            MotifKind::PhishingFunnel => g.phishing(p, start),
            MotifKind::MimicScam => g.scam(p, start),
            MotifKind::NormalActivity => {
                let decoy = slot - cfg.phishing_count - cfg.scam_count;
                if decoy % 2 == 0 {
                    g.merchant(p, start)
                } else {
                    g.service(p, start)
                }
            }
        }
    }
    let Gen { mut txs, labels, .. } = g;
    for tx in &mut txs {
        tx.time = libm::floor(tx.time);
    }
    txs.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.from.cmp(&b.from)).then(a.to.cmp(&b.to)).then(a.eth.total_cmp(&b.eth)));
    let accounts: Vec<Account> = labels
        .iter()
        .enumerate()
        .map(|(id, &label)| Account { id, address: address(cfg.seed, id), label })
        .collect();
    let mut edges = Vec::with_capacity(txs.len());
    let mut motifs = Vec::new();
    for (edge, tx) in txs.iter().enumerate() {
        let timestamp = tx.time as u64;
        let value = libm::round(tx.eth * WEI_PER_ETH).max(1.0) as u128;
        edges.push(Transaction { from: tx.from, to: tx.to, value, timestamp, block: timestamp / BLOCK_SECONDS });
        if let Some((kind, role, principal, chain)) = tx.tag {
            motifs.push(MotifEdge { edge, kind, role, principal, chain });
        }
    }
    let graph = TemporalMultigraph::from_parts(accounts, edges)?;
    Ok(SynthOutput { graph, motifs, principals: kinds })
}
