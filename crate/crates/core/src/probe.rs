//! Degree and value baseline: multinomial logistic regression over per-account
//! aggregates. Used as the floor the sequence model has to beat.

use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{AccountId, TemporalMultigraph};
use crate::model::{argmax, softmax};

pub const PROBE_DIM: usize = 5;

/// `[ln(1+in-degree), ln(1+out-degree), ln(1+total degree), ln(1+ETH in), ln(1+ETH out)]`,
/// degrees counting distinct counterparties.
pub fn account_features(g: &TemporalMultigraph, v: AccountId) -> [f64; PROBE_DIM] {
    let mut senders: Vec<AccountId> = g.in_edges(v).iter().map(|&e| g.edge(e).from).collect();
    let mut receivers: Vec<AccountId> = g.out_edges(v).iter().map(|&e| g.edge(e).to).collect();
    senders.sort_unstable();
    senders.dedup();
    receivers.sort_unstable();
    receivers.dedup();
    let eth_in: f64 = g.in_edges(v).iter().map(|&e| g.edge(e).value_eth()).sum();
    let eth_out: f64 = g.out_edges(v).iter().map(|&e| g.edge(e).value_eth()).sum();
    [
        libm::log1p(senders.len() as f64),
        libm::log1p(receivers.len() as f64),
        libm::log1p(g.degree(v) as f64),
        libm::log1p(eth_in),
        libm::log1p(eth_out),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub iterations: usize,
    pub lr: f64,
    pub l2: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { iterations: 2000, lr: 0.5, l2: 1e-4 }
    }
}

/// Softmax regression on standardized features, fitted by full-batch gradient descent.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticProbe {
    classes: usize,
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `classes x (dim + 1)`, bias last.
    weights: Vec<Vec<f64>>,
}

impl LogisticProbe {
    /// Panics if `x` is empty or rows have different lengths.
    pub fn fit(x: &[Vec<f64>], y: &[usize], classes: usize, cfg: &ProbeConfig) -> Self {
        assert!(!x.is_empty() && x.len() == y.len(), "probe needs labeled rows");
        let dim = x[0].len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; dim];
        for row in x {
            for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 0.0 { libm::sqrt(*s) } else { 1.0 };
        }
        let mut probe = Self { classes, mean, scale, weights: vec![vec![0.0; dim + 1]; classes] };
        let z: Vec<Vec<f64>> = x.iter().map(|r| probe.standardize(r)).collect();
        for _ in 0..cfg.iterations {
            let mut grad = vec![vec![0.0; dim + 1]; classes];
            for (row, &label) in z.iter().zip(y) {
                let p = softmax(&probe.scores(row));
                for c in 0..classes {
                    let err = p[c] - if c == label { 1.0 } else { 0.0 };
                    for j in 0..dim {
                        grad[c][j] += err * row[j] / n;
                    }
                    grad[c][dim] += err / n;
                }
            }
            for (w, g) in probe.weights.iter_mut().zip(&grad) {
                for j in 0..=dim {
                    let decay = if j < dim { cfg.l2 * w[j] } else { 0.0 };
                    w[j] -= cfg.lr * (g[j] + decay);
                }
            }
        }
        probe
    }

    fn standardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    fn scores(&self, z: &[f64]) -> Vec<f64> {
        self.weights.iter().map(|w| w[..z.len()].iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + w[z.len()]).collect()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn probabilities(&self, row: &[f64]) -> Vec<f64> {
        softmax(&self.scores(&self.standardize(row)))
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        argmax(&self.probabilities(row))
    }
}
