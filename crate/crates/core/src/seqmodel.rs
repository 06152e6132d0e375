//! Sequence classifier over `Phi`.
//!
//! In transposed mode the tokens are the `D` hidden channels: each channel's
//! temporal profile (a length-`m_max` column of `Phi`) is embedded to width
//! `d`, attention runs across channels, a learned linear aggregation over
//! the channel tokens followed by nonlinear hidden layers summarizes them, and
//! a two-layer projection head produces class logits.
//!
//! Conventional mode embeds each time step as a token, adds sinusoidal
//! positions, attends over time with the padding mask and mean-pools the real
//! tokens into the same projection head.

use alloc::vec;
use alloc::vec::Vec;

use crate::nn::{NnError, Tape, Tensor, Var};
use crate::seeding::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SequenceMode {
    Transposed,
    Conventional,
}

/// Pre-norm transformer block parameters.
#[derive(Debug, Clone, Copy)]
pub struct BlockVars {
    pub ln1_g: Var,
    pub ln1_b: Var,
    pub q: Var,
    pub k: Var,
    pub v: Var,
    pub ln2_g: Var,
    pub ln2_b: Var,
    pub ffn1_w: Var,
    pub ffn1_b: Var,
    pub ffn2_w: Var,
    pub ffn2_b: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub w: Var,
    pub b: Var,
}

#[derive(Debug, Clone)]
pub struct SeqVars {
    /// `m_max x d` (transposed) or `D x d` (conventional).
    pub embed: LinearVars,
    pub blocks: Vec<BlockVars>,
    pub final_g: Var,
    pub final_b: Var,
    /// Transposed mode only: `1 x D` token aggregation and bias `d`.
    pub temporal: Option<LinearVars>,
    pub temporal_hidden: Vec<LinearVars>,
    pub proj1: LinearVars,
    pub proj2: LinearVars,
}

/// Runtime knobs shared by both modes.
pub struct Runtime<'a> {
    pub eps: f64,
    /// Dropout rate and RNG; `None` at evaluation.
    pub dropout: Option<(f64, &'a mut Rng)>,
}

impl Runtime<'_> {
    pub fn eval() -> Runtime<'static> {
        Runtime { eps: 1e-5, dropout: None }
    }

    fn drop(&mut self, tape: &mut Tape, x: Var) -> Var {
        match self.dropout.as_mut() {
            Some((p, rng)) => tape.dropout(x, *p, *rng),
            None => x,
        }
    }
}

/// Pads (or truncates) `phi` (`m x D`, `true_len` real rows) to `m_max` rows.
///
/// Keeps the most recent `m_max` rows when too long. A zero-length sequence
/// becomes one zero row marked real so that pooling has a target.
pub fn pad_sequence(tape: &mut Tape, phi: Var, true_len: usize, m_max: usize) -> Result<(Var, Vec<bool>), NnError> {
    let m = tape.value(phi).dims2().0;
    if true_len == 0 {
        let width = tape.value(phi).dims2().1;
        let mut mask = vec![false; m_max];
        mask[0] = true;
        return Ok((tape.constant(Tensor::zeros(&[m_max, width])), mask));
    }
    if true_len > m {
        return Err(NnError::IndexOutOfRange { index: true_len, len: m });
    }
    let skip = true_len.saturating_sub(m_max);
    let kept = true_len - skip;
    let index: Vec<Option<usize>> = (0..m_max).map(|i| (i < kept).then_some(skip + i)).collect();
    let mask = (0..m_max).map(|i| i < kept).collect();
    Ok((tape.gather_rows(phi, &index)?, mask))
}

/// Pre-norm residual block. `key_mask[j] == false` hides token `j` from every query.
pub fn attention_block(tape: &mut Tape, x: Var, key_mask: Option<&[bool]>, p: &BlockVars, rt: &mut Runtime<'_>) -> Result<Var, NnError> {
    let (t, d) = tape.value(x).dims2();
    let h = tape.layer_norm(x, p.ln1_g, p.ln1_b, rt.eps)?;
    let q = tape.matmul(h, p.q)?;
    let k = tape.matmul(h, p.k)?;
    let v = tape.matmul(h, p.v)?;
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, 1.0 / libm::sqrt(d as f64));
    let attn = match key_mask {
        Some(mask) => {
            let full: Vec<bool> = (0..t).flat_map(|_| mask.iter().copied()).collect();
            tape.masked_softmax(scores, &full)?
        }
        None => tape.softmax(scores, 1)?,
    };
    let o = tape.matmul(attn, v)?;
    let o = rt.drop(tape, o);
    let x = tape.add(x, o)?;
    let h = tape.layer_norm(x, p.ln2_g, p.ln2_b, rt.eps)?;
    let f = tape.linear(h, p.ffn1_w, Some(p.ffn1_b))?;
    let f = tape.gelu(f);
    let f = tape.linear(f, p.ffn2_w, Some(p.ffn2_b))?;
    let f = rt.drop(tape, f);
    tape.add(x, f)
}

fn projection(tape: &mut Tape, pooled: Var, p: &SeqVars) -> Result<Var, NnError> {
    let h = tape.linear(pooled, p.proj1.w, Some(p.proj1.b))?;
    let h = tape.gelu(h);
    tape.linear(h, p.proj2.w, Some(p.proj2.b))
}

/// Channel-token classifier; returns `1 x C` logits.
pub fn forward_transposed(tape: &mut Tape, phi_pad: Var, mask: &[bool], p: &SeqVars, rt: &mut Runtime<'_>) -> Result<Var, NnError> {
    let (m_max, d_channels) = tape.value(phi_pad).dims2();
    if mask.len() != m_max {
        return Err(NnError::DataLength { shape: vec![m_max], len: mask.len() });
    }
    let xt = tape.transpose(phi_pad)?;
    let keep: Vec<f64> = (0..d_channels).flat_map(|_| mask.iter().map(|&m| if m { 1.0 } else { 0.0 })).collect();
    let keep = tape.constant(Tensor::new(&[d_channels, m_max], keep)?);
    let xt = tape.mul(xt, keep)?;
    let mut h = tape.linear(xt, p.embed.w, Some(p.embed.b))?;
    for block in &p.blocks {
        h = attention_block(tape, h, None, block, rt)?;
    }
    let h = tape.layer_norm(h, p.final_g, p.final_b, rt.eps)?;
    let temporal = p.temporal.ok_or(NnError::EmptyInput("temporal head"))?;
    let mut pooled = tape.matmul(temporal.w, h)?;
    pooled = tape.add_row(pooled, temporal.b)?;
    for layer in &p.temporal_hidden {
        let z = tape.linear(pooled, layer.w, Some(layer.b))?;
        pooled = tape.gelu(z);
    }
    projection(tape, pooled, p)
}

/// Sinusoidal position table, `len x d`.
pub fn positional_encoding(len: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; len * d];
    for pos in 0..len {
        for i in 0..d {
            let rate = libm::pow(10_000.0, (2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 / rate;
            data[pos * d + i] = if i % 2 == 0 { libm::sin(angle) } else { libm::cos(angle) };
        }
    }
    Tensor::new(&[len, d], data).expect("non-empty table")
}

/// Time-token classifier used by the conventional-transformer ablation.
pub fn forward_conventional(tape: &mut Tape, phi_pad: Var, mask: &[bool], p: &SeqVars, rt: &mut Runtime<'_>) -> Result<Var, NnError> {
    let m_max = tape.value(phi_pad).dims2().0;
    if mask.len() != m_max {
        return Err(NnError::DataLength { shape: vec![m_max], len: mask.len() });
    }
    let d = tape.value(p.embed.b).numel();
    let tokens = tape.linear(phi_pad, p.embed.w, Some(p.embed.b))?;
    let pe = tape.constant(positional_encoding(m_max, d));
    let mut h = tape.add(tokens, pe)?;
    for block in &p.blocks {
        h = attention_block(tape, h, Some(mask), block, rt)?;
    }
    let h = tape.layer_norm(h, p.final_g, p.final_b, rt.eps)?;
    let real = mask.iter().filter(|m| **m).count().max(1) as f64;
    let pool: Vec<f64> = mask.iter().map(|&m| if m { 1.0 / real } else { 0.0 }).collect();
    let pool = tape.constant(Tensor::new(&[1, m_max], pool)?);
    let pooled = tape.matmul(pool, h)?;
    projection(tape, pooled, p)
}
