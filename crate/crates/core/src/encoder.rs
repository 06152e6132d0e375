//! Graph-attention encoding of subgraphs into the sequence feature `Phi`.
//!
//! All subgraphs of a sequence are processed together: their aligned matrices
//! are stacked into one `(m * N) x FEATURE_DIM` block matrix (`N = n_max + 1`)
//! and attention is restricted to each block by the adjacency mask.

use alloc::vec;
use alloc::vec::Vec;

use crate::features::{AlignedSubgraph, FEATURE_DIM};
use crate::nn::{NnError, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Readout {
    /// Row of the anchor node.
    Anchor,
    /// Mean over the true rows.
    Mean,
}

/// Tape handles of one GAT layer.
#[derive(Debug, Clone, Copy)]
pub struct GatLayer {
    /// `d_in x d_h` projection.
    pub w: Var,
    /// `heads x (d_h / heads)` source half of the attention vector.
    pub a_src: Var,
    /// `heads x (d_h / heads)` neighbor half of the attention vector.
    pub a_dst: Var,
}

/// Star adjacency over one block: every true node attends to itself and to
/// the anchor, the anchor attends to every true node. Padding attends to nothing.
pub fn star_adjacency(count: usize, n_max: usize) -> Vec<bool> {
    let n = n_max + 1;
    let mut adj = vec![false; n * n];
    for i in 0..=count {
        adj[i * n + i] = true;
        adj[i] = true;
        adj[i * n] = true;
    }
    adj
}

/// One GAT layer over stacked blocks of `block` rows:
/// `ELU(attention(x W))`, heads concatenated. Padded rows come out as zero.
pub fn gat_forward(
    tape: &mut Tape,
    x: Var,
    adj: &[bool],
    layer: &GatLayer,
    heads: usize,
    block: usize,
    slope: f64,
) -> Result<Var, NnError> {
    let z = tape.matmul(x, layer.w)?;
    let h = tape.graph_attention(z, layer.a_src, layer.a_dst, adj, heads, block, slope)?;
    Ok(tape.elu(h))
}

/// Weights that average the first `count + 1` rows of each block.
fn mean_weights(counts: &[usize], block: usize) -> Tensor {
    let mut w = vec![0.0; counts.len() * block];
    for (b, &c) in counts.iter().enumerate() {
        let true_rows = (c + 1).min(block);
        for j in 0..true_rows {
            w[b * block + j] = 1.0 / true_rows as f64;
        }
    }
    Tensor::new(&[counts.len(), block], w).expect("counts non-empty")
}

/// Per-block readout of stacked node embeddings into one row per block.
pub fn readout(tape: &mut Tape, h: Var, counts: &[usize], block: usize, mode: Readout) -> Result<Var, NnError> {
    if counts.is_empty() {
        return Err(NnError::EmptyInput("readout"));
    }
    match mode {
        Readout::Anchor => {
            let idx: Vec<Option<usize>> = (0..counts.len()).map(|b| Some(b * block)).collect();
            tape.gather_rows(h, &idx)
        }
        Readout::Mean => {
            let w = tape.constant(mean_weights(counts, block));
            tape.block_row_matmul(w, h)
        }
    }
}

/// Tape handles needed to encode a sequence.
#[derive(Debug, Clone)]
pub struct EncoderVars {
    /// `1 x n_max` neighbor aggregation logits.
    pub agg: Var,
    /// Empty when the graph layer is ablated.
    pub gat: Vec<GatLayer>,
    /// `(FEATURE_DIM x D, D)` map used instead of GAT by the no-graph-layer ablation.
    pub no_graph: Option<(Var, Var)>,
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderShape {
    pub n_max: usize,
    pub hidden: usize,
    pub heads: usize,
    pub readout: Readout,
    pub slope: f64,
}

/// Builds the stacked `(m * N) x FEATURE_DIM` input: each block's anchor row is
/// the masked-softmax aggregation of its raw neighbor rows, followed by its
/// aligned neighbor rows.
pub fn stacked_input(tape: &mut Tape, subgraphs: &[AlignedSubgraph], agg: Var, n_max: usize) -> Result<Var, NnError> {
    let m = subgraphs.len();
    let block = n_max + 1;
    let mut raw = Vec::with_capacity(m * n_max * FEATURE_DIM);
    let mut aligned = Vec::with_capacity(m * n_max * FEATURE_DIM);
    let mut mask = Vec::with_capacity(m * n_max);
    for s in subgraphs {
        raw.extend_from_slice(&s.raw);
        aligned.extend_from_slice(&s.aligned);
        mask.extend((0..n_max).map(|j| j < s.count));
    }
    let raw = tape.constant(Tensor::new(&[m * n_max, FEATURE_DIM], raw)?);
    let aligned = tape.constant(Tensor::new(&[m * n_max, FEATURE_DIM], aligned)?);
    let rep = tape.gather_rows(agg, &vec![Some(0); m])?;
    let weights = tape.masked_softmax(rep, &mask)?;
    let anchors = tape.block_row_matmul(weights, raw)?;
    let both = tape.concat_rows(&[anchors, aligned])?;
    let mut order = Vec::with_capacity(m * block);
    for b in 0..m {
        order.push(Some(b));
        order.extend((0..n_max).map(|j| Some(m + b * n_max + j)));
    }
    tape.gather_rows(both, &order)
}

/// Encodes every subgraph and stacks the embeddings into `Phi` (`m x D`).
///
/// Returns `(Phi, true_len)`. An empty sequence gives one zero row with
/// `true_len = 0`.
pub fn encode_sequence(
    tape: &mut Tape,
    subgraphs: &[AlignedSubgraph],
    vars: &EncoderVars,
    shape: &EncoderShape,
) -> Result<(Var, usize), NnError> {
    if subgraphs.is_empty() {
        return Ok((tape.constant(Tensor::zeros(&[1, shape.hidden])), 0));
    }
    let block = shape.n_max + 1;
    let x = stacked_input(tape, subgraphs, vars.agg, shape.n_max)?;
    let counts: Vec<usize> = subgraphs.iter().map(|s| s.count).collect();
    let phi = if let Some((w, b)) = vars.no_graph {
        let weights = tape.constant(mean_weights(&counts, block));
        let pooled = tape.block_row_matmul(weights, x)?;
        tape.linear(pooled, w, Some(b))?
    } else {
        let mut adj = Vec::with_capacity(subgraphs.len() * block * block);
        for s in subgraphs {
            adj.extend(star_adjacency(s.count, shape.n_max));
        }
        let mut h = x;
        for layer in &vars.gat {
            h = gat_forward(tape, h, &adj, layer, shape.heads, block, shape.slope)?;
        }
        readout(tape, h, &counts, block, shape.readout)?
    };
    Ok((phi, subgraphs.len()))
}
