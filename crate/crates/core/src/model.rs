//! The full classifier: parameter store, initialization and end-to-end forward.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::encoder::{encode_sequence, EncoderShape, EncoderVars, GatLayer, Readout};
use crate::features::{subgraph_features, AlignedSubgraph, FeatureError, FEATURE_DIM};
use crate::graph::Label;
use crate::nn::{NnError, Tape, Tensor, Var};
use crate::seeding::{self, Rng};
use crate::seqmodel::{
    forward_conventional, forward_transposed, pad_sequence, BlockVars, LinearVars, Runtime, SeqVars, SequenceMode,
};
use crate::walk::SubgraphSequence;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ModelConfig {
    /// Neighbor slots per subgraph; equals the walk's structural window.
    pub n_max: usize,
    /// GAT output width `D` (also `d_h`).
    pub hidden: usize,
    pub gat_heads: usize,
    pub gat_layers: usize,
    pub readout: Readout,
    /// `false` replaces GAT by masked mean + linear map.
    pub graph_layer: bool,
    pub m_max: usize,
    pub d_model: usize,
    pub blocks: usize,
    pub ffn_mult: usize,
    /// Hidden nonlinear layers after the token aggregation (transposed mode).
    pub head_depth: usize,
    pub mode: SequenceMode,
    pub classes: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub ln_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_max: 10,
            hidden: 64,
            gat_heads: 4,
            gat_layers: 1,
            readout: Readout::Anchor,
            graph_layer: true,
            m_max: 32,
            d_model: 64,
            blocks: 2,
            ffn_mult: 4,
            head_depth: 1,
            mode: SequenceMode::Transposed,
            classes: 3,
            dropout: 0.1,
            leaky_slope: 0.01,
            ln_eps: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("parameter {name}: expected shape {expected:?}, found {found:?}")]
    ParamShape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("parameter list mismatch: expected {expected}, found {found}")]
    ParamSet { expected: String, found: String },
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let checks = [
            (self.n_max >= 1, "n_max must be >= 1"),
            (self.hidden >= 1, "hidden must be >= 1"),
            (self.gat_heads >= 1 && self.hidden % self.gat_heads == 0, "hidden must be divisible by gat_heads"),
            (self.gat_layers >= 1 || !self.graph_layer, "gat_layers must be >= 1"),
            (self.m_max >= 1, "m_max must be >= 1"),
            (self.d_model >= 1, "d_model must be >= 1"),
            (self.ffn_mult >= 1, "ffn_mult must be >= 1"),
            (self.classes >= 2, "classes must be >= 2"),
            ((0.0..1.0).contains(&self.dropout), "dropout must be in [0, 1)"),
            (self.leaky_slope > 0.0 && self.leaky_slope < 1.0, "leaky_slope must be in (0, 1)"),
            (self.ln_eps > 0.0, "ln_eps must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(ModelError::InvalidConfig(msg));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Zeros,
    Ones,
    Const(f64),
    Xavier { gain: f64 },
}

/// Named parameter tensors in a fixed, config-determined order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

/// Index of each parameter in the store, grouped by role.
#[derive(Debug, Clone)]
struct Layout {
    agg: usize,
    gat: Vec<[usize; 3]>,
    no_graph: Option<[usize; 2]>,
    embed: [usize; 2],
    blocks: Vec<[usize; 11]>,
    final_ln: [usize; 2],
    temporal: Option<[usize; 2]>,
    temporal_hidden: Vec<[usize; 2]>,
    proj1: [usize; 2],
    proj2: [usize; 2],
}

struct LayoutBuilder {
    specs: Vec<(String, Vec<usize>, Init)>,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        self.specs.push((name, shape.to_vec(), init));
        self.specs.len() - 1
    }
}

fn layout(cfg: &ModelConfig) -> (Layout, Vec<(String, Vec<usize>, Init)>) {
    let mut b = LayoutBuilder { specs: Vec::new() };
    let gain = core::f64::consts::SQRT_2;
    let (d, dd, hid) = (cfg.d_model, cfg.d_model * cfg.ffn_mult, cfg.hidden);
    let agg = b.add("agg.w".into(), &[1, cfg.n_max], Init::Zeros);
    let mut gat = Vec::new();
    let mut no_graph = None;
    if cfg.graph_layer {
        let dk = hid / cfg.gat_heads;
        for l in 0..cfg.gat_layers {
            let d_in = if l == 0 { FEATURE_DIM } else { hid };
            gat.push([
                b.add(format!("gat{l}.w"), &[d_in, hid], Init::Xavier { gain }),
                b.add(format!("gat{l}.a_src"), &[cfg.gat_heads, dk], Init::Xavier { gain }),
                b.add(format!("gat{l}.a_dst"), &[cfg.gat_heads, dk], Init::Xavier { gain }),
            ]);
        }
    } else {
        no_graph = Some([
            b.add("nograph.w".into(), &[FEATURE_DIM, hid], Init::Xavier { gain: 1.0 }),
            b.add("nograph.b".into(), &[hid], Init::Zeros),
        ]);
    }
    let embed_in = match cfg.mode {
        SequenceMode::Transposed => cfg.m_max,
        SequenceMode::Conventional => hid,
    };
    let embed = [
        b.add("embed.w".into(), &[embed_in, d], Init::Xavier { gain: 1.0 }),
        b.add("embed.b".into(), &[d], Init::Zeros),
    ];
    let mut blocks = Vec::new();
    for k in 0..cfg.blocks {
        let p = |s: &str| format!("block{k}.{s}");
        blocks.push([
            b.add(p("ln1.g"), &[d], Init::Ones),
            b.add(p("ln1.b"), &[d], Init::Zeros),
            b.add(p("q"), &[d, d], Init::Xavier { gain: 1.0 }),
            b.add(p("k"), &[d, d], Init::Xavier { gain: 1.0 }),
            b.add(p("v"), &[d, d], Init::Xavier { gain: 1.0 }),
            b.add(p("ln2.g"), &[d], Init::Ones),
            b.add(p("ln2.b"), &[d], Init::Zeros),
            b.add(p("ffn1.w"), &[d, dd], Init::Xavier { gain: 1.0 }),
            b.add(p("ffn1.b"), &[dd], Init::Zeros),
            b.add(p("ffn2.w"), &[dd, d], Init::Xavier { gain: 1.0 }),
            b.add(p("ffn2.b"), &[d], Init::Zeros),
        ]);
    }
    let final_ln = [b.add("final_ln.g".into(), &[d], Init::Ones), b.add("final_ln.b".into(), &[d], Init::Zeros)];
    let mut temporal = None;
    let mut temporal_hidden = Vec::new();
    if cfg.mode == SequenceMode::Transposed {
        temporal = Some([
            b.add("temporal.w".into(), &[1, hid], Init::Const(1.0 / hid as f64)),
            b.add("temporal.b".into(), &[d], Init::Zeros),
        ]);
        for h in 0..cfg.head_depth {
            temporal_hidden.push([
                b.add(format!("temporal.hidden{h}.w"), &[d, d], Init::Xavier { gain: 1.0 }),
                b.add(format!("temporal.hidden{h}.b"), &[d], Init::Zeros),
            ]);
        }
    }
    let proj1 = [b.add("proj1.w".into(), &[d, d], Init::Xavier { gain: 1.0 }), b.add("proj1.b".into(), &[d], Init::Zeros)];
    let proj2 = [
        b.add("proj2.w".into(), &[d, cfg.classes], Init::Xavier { gain: 1.0 }),
        b.add("proj2.b".into(), &[cfg.classes], Init::Zeros),
    ];
    let l = Layout { agg, gat, no_graph, embed, blocks, final_ln, temporal, temporal_hidden, proj1, proj2 };
    (l, b.specs)
}

fn init_tensor(shape: &[usize], init: Init, rng: &mut Rng) -> Tensor {
    match init {
        Init::Zeros => Tensor::zeros(shape),
        Init::Ones => Tensor::full(shape, 1.0),
        Init::Const(c) => Tensor::full(shape, c),
        Init::Xavier { gain } => {
            let (fan_in, fan_out) = (shape[0], shape[shape.len() - 1]);
            let bound = gain * libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            let n = shape.iter().product();
            let data = (0..n).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound).collect();
            Tensor::new(shape, data).expect("shape from layout")
        }
    }
}

/// Per-subgraph features of one walk, ready for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInput {
    /// At most `m_max` subgraphs, the most recent ones.
    pub subgraphs: Vec<AlignedSubgraph>,
    /// Number of subgraphs in the walk before truncation.
    pub walk_len: usize,
}

impl SequenceInput {
    /// Computes features for every subgraph of `seq`, keeping the last `m_max`.
    pub fn from_sequence(seq: &SubgraphSequence, n_max: usize, m_max: usize, slope: f64) -> Result<Self, ModelError> {
        let skip = seq.len().saturating_sub(m_max);
        let subgraphs = seq.subgraphs[skip..]
            .iter()
            .zip(&seq.intervals[skip..])
            .map(|(sg, iv)| subgraph_features(sg, *iv, n_max, slope))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { subgraphs, walk_len: seq.len() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    pub fn from_probabilities(probabilities: Vec<f64>) -> Self {
        let class = argmax(&probabilities);
        Self { class, probabilities }
    }

    pub fn label(&self) -> Option<Label> {
        Label::from_class_index(self.class)
    }
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| libm::exp(l - max)).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|x| x / total).collect()
}

/// Parameters bound to a tape for one forward pass.
pub struct Bound {
    pub vars: Vec<Var>,
    pub encoder: EncoderVars,
    pub seq: SeqVars,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    layout_names: Vec<String>,
    params: ParamStore,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let (_, specs) = layout(&config);
        let mut rng = seeding::rng(seed);
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for (name, shape, init) in specs {
            tensors.push(init_tensor(&shape, init, &mut rng));
            names.push(name);
        }
        Ok(Self { config, layout_names: names.clone(), params: ParamStore { names, tensors } })
    }

    /// Rebuilds a model from stored tensors, checking names and shapes against
    /// the layout implied by `config`.
    pub fn from_parts(config: ModelConfig, names: Vec<String>, tensors: Vec<Tensor>) -> Result<Self, ModelError> {
        config.validate()?;
        let (_, specs) = layout(&config);
        let expected: Vec<&str> = specs.iter().map(|s| s.0.as_str()).collect();
        let found: Vec<&str> = names.iter().map(String::as_str).collect();
        if expected != found || tensors.len() != names.len() {
            return Err(ModelError::ParamSet { expected: expected.join(","), found: found.join(",") });
        }
        for ((name, shape, _), t) in specs.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(ModelError::ParamShape { name: name.clone(), expected: shape.clone(), found: t.shape().to_vec() });
            }
        }
        Ok(Self { config, layout_names: names.clone(), params: ParamStore { names, tensors } })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn prepare(&self, seq: &SubgraphSequence) -> Result<SequenceInput, ModelError> {
        SequenceInput::from_sequence(seq, self.config.n_max, self.config.m_max, self.config.leaky_slope)
    }

    /// Records every parameter on `tape`, tracked when `grad` is true.
    pub fn bind(&self, tape: &mut Tape, grad: bool) -> Bound {
        let vars: Vec<Var> = self
            .params
            .tensors
            .iter()
            .map(|t| if grad { tape.leaf(t.clone().with_grad()) } else { tape.leaf(t.clone()) })
            .collect();
        let (l, _) = layout(&self.config);
        let v = |i: usize| vars[i];
        let lin = |p: [usize; 2]| LinearVars { w: v(p[0]), b: v(p[1]) };
        let encoder = EncoderVars {
            agg: v(l.agg),
            gat: l.gat.iter().map(|g| GatLayer { w: v(g[0]), a_src: v(g[1]), a_dst: v(g[2]) }).collect(),
            no_graph: l.no_graph.map(|p| (v(p[0]), v(p[1]))),
        };
        let seq = SeqVars {
            embed: lin(l.embed),
            blocks: l
                .blocks
                .iter()
                .map(|b| BlockVars {
                    ln1_g: v(b[0]),
                    ln1_b: v(b[1]),
                    q: v(b[2]),
                    k: v(b[3]),
                    v: v(b[4]),
                    ln2_g: v(b[5]),
                    ln2_b: v(b[6]),
                    ffn1_w: v(b[7]),
                    ffn1_b: v(b[8]),
                    ffn2_w: v(b[9]),
                    ffn2_b: v(b[10]),
                })
                .collect(),
            final_g: v(l.final_ln[0]),
            final_b: v(l.final_ln[1]),
            temporal: l.temporal.map(lin),
            temporal_hidden: l.temporal_hidden.iter().map(|p| lin(*p)).collect(),
            proj1: lin(l.proj1),
            proj2: lin(l.proj2),
        };
        Bound { vars, encoder, seq }
    }

    pub fn encoder_shape(&self) -> EncoderShape {
        EncoderShape {
            n_max: self.config.n_max,
            hidden: self.config.hidden,
            heads: self.config.gat_heads,
            readout: self.config.readout,
            slope: self.config.leaky_slope,
        }
    }

    /// Classifies a padded `Phi` directly (skips the encoder).
    pub fn forward_phi(&self, tape: &mut Tape, bound: &Bound, phi_pad: Var, mask: &[bool], rt: &mut Runtime<'_>) -> Result<Var, NnError> {
        match self.config.mode {
            SequenceMode::Transposed => forward_transposed(tape, phi_pad, mask, &bound.seq, rt),
            SequenceMode::Conventional => forward_conventional(tape, phi_pad, mask, &bound.seq, rt),
        }
    }

    /// Encoder, padding and sequence classifier; returns `1 x C` logits.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, input: &SequenceInput, dropout: Option<&mut Rng>) -> Result<Var, NnError> {
        let (phi, true_len) = encode_sequence(tape, &input.subgraphs, &bound.encoder, &self.encoder_shape())?;
        let (phi_pad, mask) = pad_sequence(tape, phi, true_len, self.config.m_max)?;
        let mut rt = Runtime { eps: self.config.ln_eps, dropout: dropout.map(|r| (self.config.dropout, r)) };
        self.forward_phi(tape, bound, phi_pad, &mask, &mut rt)
    }

    pub fn logits(&self, input: &SequenceInput) -> Result<Vec<f64>, NnError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let out = self.forward(&mut tape, &bound, input, None)?;
        Ok(tape.value(out).data().to_vec())
    }

    pub fn predict(&self, input: &SequenceInput) -> Result<Prediction, NnError> {
        Ok(Prediction::from_probabilities(softmax(&self.logits(input)?)))
    }

    /// Averages class probabilities over several walks of one account.
    pub fn predict_account(&self, walks: &[SequenceInput]) -> Result<Prediction, NnError> {
        let mut acc = vec![0.0; self.config.classes];
        for w in walks {
            for (a, p) in acc.iter_mut().zip(softmax(&self.logits(w)?)) {
                *a += p;
            }
        }
        let n = walks.len().max(1) as f64;
        Ok(Prediction::from_probabilities(acc.into_iter().map(|a| a / n).collect()))
    }

    /// Weighted cross-entropy of one sample and its gradient for every parameter.
    pub fn loss_and_grad(
        &self,
        input: &SequenceInput,
        label: usize,
        weight: f64,
        dropout_seed: Option<u64>,
    ) -> Result<(f64, Vec<Vec<f64>>), NnError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, true);
        let mut rng = dropout_seed.map(seeding::rng);
        let dropout = if self.config.dropout > 0.0 { rng.as_mut() } else { None };
        let logits = self.forward(&mut tape, &bound, input, dropout)?;
        let loss = tape.cross_entropy(logits, label, weight)?;
        tape.backward(loss)?;
        let value = tape.value(loss).data()[0];
        let grads = bound
            .vars
            .iter()
            .zip(&self.params.tensors)
            .map(|(v, t)| tape.grad(*v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
            .collect();
        Ok((value, grads))
    }

    pub fn layout_names(&self) -> &[String] {
        &self.layout_names
    }
}
