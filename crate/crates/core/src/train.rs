//! Supervised training, evaluation and the ablation harness.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::graph::{AccountId, Label, TemporalMultigraph};
use crate::metrics::{MetricsError, MetricsReport};
use crate::model::{Model, ModelConfig, ModelError, SequenceInput};
use crate::nn::{Adam, NnError, Tensor};
use crate::seeding::{self, derive_seed};
use crate::seqmodel::SequenceMode;
use crate::walk::SubgraphSequence;

const SPLIT_STREAM: u64 = 0x5350_4c49;
const INIT_STREAM: u64 = 0x494e_4954;
const SHUFFLE_STREAM: u64 = 0x5348_5546;
const DROPOUT_STREAM: u64 = 0x4452_4f50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Ablation {
    None,
    NoGraphLayer,
    ConventionalTransformer,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::None, Ablation::NoGraphLayer, Ablation::ConventionalTransformer];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoGraphLayer => "no_graph_layer",
            Ablation::ConventionalTransformer => "conventional_transformer",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }

    /// The model config this variant trains, derived from the full model's.
    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let mut cfg = base.clone();
        match self {
            Ablation::None => {}
            Ablation::NoGraphLayer => cfg.graph_layer = false,
            Ablation::ConventionalTransformer => cfg.mode = SequenceMode::Conventional,
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ClassWeights {
    /// Every sample weighs 1.
    None,
    /// `n_train / (classes_present * n_class)` over training walks.
    InverseFrequency,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    /// Maximum number of epochs.
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// `(train_frac, test_frac)`.
    pub split: (f64, f64),
    pub class_weights: ClassWeights,
    pub ablation: Ablation,
    /// Epochs without held-out improvement before stopping; 0 disables.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            betas: (0.9, 0.999),
            epochs: 200,
            batch_size: 16,
            seed: 0,
            split: (0.8, 0.2),
            class_weights: ClassWeights::InverseFrequency,
            ablation: Ablation::None,
            patience: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    InvalidConfig(&'static str),
    #[error("dataset has fewer than two classes")]
    SingleClass,
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("account {0} appears in both splits")]
    Leak(AccountId),
    #[error("label {label} outside {classes} model classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl TrainConfig {
    pub fn validate(&self, classes: usize) -> Result<(), TrainError> {
        let (tr, te) = self.split;
        let checks = [
            (self.lr > 0.0 && self.lr.is_finite(), "lr must be positive"),
            ((0.0..1.0).contains(&self.betas.0) && (0.0..1.0).contains(&self.betas.1), "betas must lie in [0, 1)"),
            (self.epochs >= 1, "epochs must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (tr > 0.0 && te > 0.0 && libm::fabs(tr + te - 1.0) < 1e-9, "split fractions must be positive and sum to 1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(TrainError::InvalidConfig(msg));
            }
        }
        if let ClassWeights::Explicit(w) = &self.class_weights {
            if w.len() != classes || w.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(TrainError::InvalidConfig("class_weights must hold one positive weight per class"));
            }
        }
        Ok(())
    }
}

/// One labeled account and its prepared walks.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub account: AccountId,
    pub label: usize,
    pub walks: Vec<SequenceInput>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub classes: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Groups walks by start account and attaches class labels from `g`.
    /// Walks of unlabeled accounts are dropped; account order follows first appearance.
    pub fn from_walks(
        g: &TemporalMultigraph,
        walks: &[SubgraphSequence],
        model: &ModelConfig,
    ) -> Result<Self, TrainError> {
        let mut index: BTreeMap<AccountId, usize> = BTreeMap::new();
        let mut samples: Vec<Sample> = Vec::new();
        for seq in walks {
            let Ok(account) = g.account(seq.start) else { continue };
            let Some(label) = account.label.class_index() else { continue };
            let input = SequenceInput::from_sequence(seq, model.n_max, model.m_max, model.leaky_slope)?;
            let slot = *index.entry(seq.start).or_insert_with(|| {
                samples.push(Sample { account: seq.start, label, walks: Vec::new() });
                samples.len() - 1
            });
            samples[slot].walks.push(input);
        }
        Ok(Self { classes: model.classes, samples })
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for s in &self.samples {
            if s.label < self.classes {
                counts[s.label] += 1;
            }
        }
        counts
    }

    fn check_labels(&self, classes: usize) -> Result<(), TrainError> {
        match self.samples.iter().find(|s| s.label >= classes) {
            Some(s) => Err(TrainError::LabelOutOfRange { label: s.label, classes }),
            None => Ok(()),
        }
    }
}

/// Walk start accounts for a labeled graph: every phishing and scam account
/// plus up to `normal_ratio` normal accounts per malicious one, each chosen
/// as the unused normal account with the closest degree (log scale).
/// Ties are broken by a seeded shuffle. Returned ids are sorted.
pub fn select_starts(g: &TemporalMultigraph, normal_ratio: f64, seed: u64) -> Vec<AccountId> {
    let mut malicious = Vec::new();
    let mut normals = Vec::new();
    for a in g.accounts() {
        match a.label {
            Label::Phishing | Label::Scam => malicious.push(a.id),
            Label::Normal if g.degree(a.id) > 0 => normals.push(a.id),
            _ => {}
        }
    }
    normals.shuffle(&mut seeding::rng(derive_seed(seed, SPLIT_STREAM, 1)));
    let log_degree = |v: AccountId| libm::log(g.degree(v).max(1) as f64);
    let wanted = libm::floor(malicious.len() as f64 * normal_ratio.max(0.0)) as usize;
    let mut used = vec![false; normals.len()];
    let mut starts = malicious.clone();
    for k in 0..wanted.min(normals.len()) {
        let target = log_degree(malicious[k % malicious.len()]);
        let best = (0..normals.len())
            .filter(|&i| !used[i])
            .min_by(|&a, &b| libm::fabs(log_degree(normals[a]) - target).total_cmp(&libm::fabs(log_degree(normals[b]) - target)))
            .expect("enough normals");
        used[best] = true;
        starts.push(normals[best]);
    }
    starts.sort_unstable();
    starts
}

/// Sample indices on each side of an account-level split.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn check_disjoint(&self, dataset: &Dataset) -> Result<(), TrainError> {
        let train: BTreeMap<AccountId, ()> = self.train.iter().map(|&i| (dataset.samples[i].account, ())).collect();
        match self.test.iter().map(|&i| dataset.samples[i].account).find(|a| train.contains_key(a)) {
            Some(a) => Err(TrainError::Leak(a)),
            None => Ok(()),
        }
    }
}

/// Stratified account-level split. Each class with at least two accounts
/// contributes `round(n * test_frac)` accounts (at least one) to the test side.
pub fn stratified_split(dataset: &Dataset, test_frac: f64, seed: u64) -> Result<Split, TrainError> {
    let mut rng = seeding::rng(derive_seed(seed, SPLIT_STREAM, 0));
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.classes];
    for (i, s) in dataset.samples.iter().enumerate() {
        if s.label < dataset.classes {
            by_class[s.label].push(i);
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut members in by_class {
        members.shuffle(&mut rng);
        let n = members.len();
        let k = if n >= 2 { (libm::round(n as f64 * test_frac) as usize).clamp(1, n - 1) } else { 0 };
        test.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if test.is_empty() {
        return Err(TrainError::EmptySplit("test"));
    }
    Ok(Split { train, test })
}

/// Runs independent jobs and returns their results in index order.
pub trait Executor {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Executor for Serial {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Account-level predictions (probabilities averaged over walks) on `indices`.
pub fn predict_accounts<E: Executor>(
    model: &Model,
    dataset: &Dataset,
    indices: &[usize],
    exec: &E,
) -> Result<Vec<usize>, TrainError> {
    exec.map(indices.len(), |i| model.predict_account(&dataset.samples[indices[i]].walks).map(|p| p.class))
        .into_iter()
        .map(|r| r.map_err(TrainError::from))
        .collect()
}

pub fn evaluate<E: Executor>(model: &Model, dataset: &Dataset, indices: &[usize], exec: &E) -> Result<MetricsReport, TrainError> {
    if indices.is_empty() {
        return Err(TrainError::EmptySplit("evaluation"));
    }
    dataset.check_labels(model.config().classes)?;
    let predicted = predict_accounts(model, dataset, indices, exec)?;
    let actual: Vec<usize> = indices.iter().map(|&i| dataset.samples[i].label).collect();
    Ok(MetricsReport::from_predictions(&predicted, &actual, model.config().classes)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Weighted mean training loss over the epoch.
    pub loss: f64,
    pub test_weighted_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best held-out weighted F1.
    pub model: Model,
    pub report: MetricsReport,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub split: Split,
}

impl TrainOutcome {
    pub fn loss_curve(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.loss).collect()
    }
}

fn class_weights(cfg: &TrainConfig, dataset: &Dataset, train: &[usize]) -> Vec<f64> {
    match &cfg.class_weights {
        ClassWeights::None => vec![1.0; dataset.classes],
        ClassWeights::Explicit(w) => w.clone(),
        ClassWeights::InverseFrequency => {
            let mut walks = vec![0usize; dataset.classes];
            for &i in train {
                walks[dataset.samples[i].label] += dataset.samples[i].walks.len();
            }
            let total: usize = walks.iter().sum();
            let present = walks.iter().filter(|n| **n > 0).count().max(1);
            walks.iter().map(|&n| if n == 0 { 0.0 } else { total as f64 / (present * n) as f64 }).collect()
        }
    }
}

/// Trains on one side of an account-level split with early stopping on the
/// held-out weighted F1.
pub fn train<E: Executor>(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    exec: &E,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate(model_cfg.classes)?;
    dataset.check_labels(model_cfg.classes)?;
    if dataset.class_counts().iter().filter(|n| **n > 0).count() < 2 {
        return Err(TrainError::SingleClass);
    }
    let split = stratified_split(dataset, cfg.split.1, cfg.seed)?;
    train_on_split(dataset, model_cfg, cfg, split, exec)
}

/// As [`train`] with a caller-supplied split.
pub fn train_on_split<E: Executor>(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    split: Split,
    exec: &E,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate(model_cfg.classes)?;
    dataset.check_labels(model_cfg.classes)?;
    if split.train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if split.test.is_empty() {
        return Err(TrainError::EmptySplit("test"));
    }
    split.check_disjoint(dataset)?;
    let model_cfg = cfg.ablation.apply(model_cfg);
    let mut model = Model::new(model_cfg, derive_seed(cfg.seed, INIT_STREAM, 0))?;
    let weights = class_weights(cfg, dataset, &split.train);
    let items: Vec<(usize, usize)> = split
        .train
        .iter()
        .flat_map(|&s| (0..dataset.samples[s].walks.len()).map(move |w| (s, w)))
        .collect();
    if items.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    let mut adam = Adam::new(cfg.lr, cfg.betas, model.params().tensors());
    let mut best: Option<(f64, usize, Vec<Tensor>, MetricsReport)> = None;
    let mut history = Vec::new();
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        let mut order = items.clone();
        order.shuffle(&mut seeding::rng(derive_seed(cfg.seed, SHUFFLE_STREAM, epoch as u64)));
        let (mut loss_sum, mut weight_sum) = (0.0, 0.0);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let base = (b * cfg.batch_size) as u64;
            let results = exec.map(batch.len(), |i| {
                let (s, w) = batch[i];
                let sample = &dataset.samples[s];
                let seed = derive_seed(cfg.seed ^ DROPOUT_STREAM, epoch as u64, base + i as u64);
                model.loss_and_grad(&sample.walks[w], sample.label, weights[sample.label], Some(seed))
            });
            let batch_weight: f64 = batch.iter().map(|&(s, _)| weights[dataset.samples[s].label]).sum();
            if batch_weight <= 0.0 {
                continue;
            }
            let mut total: Vec<Vec<f64>> = model.params().tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
            for r in results {
                let (loss, grads) = r?;
                loss_sum += loss;
                for (acc, g) in total.iter_mut().zip(grads) {
                    for (a, x) in acc.iter_mut().zip(g) {
                        *a += x;
                    }
                }
            }
            weight_sum += batch_weight;
            for g in total.iter_mut().flatten() {
                *g /= batch_weight;
            }
            adam.step(model.params_mut().tensors_mut(), &total);
        }
        let report = evaluate(&model, dataset, &split.test, exec)?;
        let loss = if weight_sum > 0.0 { loss_sum / weight_sum } else { 0.0 };
        history.push(EpochRecord { epoch, loss, test_weighted_f1: report.weighted_f1 });
        let improved = best.as_ref().is_none_or(|(f, ..)| report.weighted_f1 > *f);
        if improved {
            best = Some((report.weighted_f1, epoch, model.params().tensors().to_vec(), report));
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                break;
            }
        }
    }
    let (_, best_epoch, tensors, report) = best.expect("at least one epoch");
    model.params_mut().tensors_mut().clone_from_slice(&tensors);
    Ok(TrainOutcome { model, report, history, best_epoch, split })
}

#[derive(Debug, Clone)]
pub struct AblationRun {
    pub ablation: Ablation,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub outcome: TrainOutcome,
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub runs: Vec<AblationRun>,
}

impl AblationReport {
    pub fn weighted_f1(&self, ablation: Ablation) -> Option<f64> {
        self.runs.iter().find(|r| r.ablation == ablation).map(|r| r.outcome.report.weighted_f1)
    }

    /// Full-model weighted F1 minus the variant's.
    pub fn delta(&self, ablation: Ablation) -> Option<f64> {
        Some(self.weighted_f1(Ablation::None)? - self.weighted_f1(ablation)?)
    }
}

/// Trains the full model and both ablations on one shared split and seed.
pub fn run_ablation<E: Executor>(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    base: &TrainConfig,
    exec: &E,
) -> Result<AblationReport, TrainError> {
    base.validate(model_cfg.classes)?;
    if dataset.class_counts().iter().filter(|n| **n > 0).count() < 2 {
        return Err(TrainError::SingleClass);
    }
    let split = stratified_split(dataset, base.split.1, base.seed)?;
    let mut runs = Vec::with_capacity(3);
    for ablation in Ablation::ALL {
        let train_config = TrainConfig { ablation, ..base.clone() };
        let outcome = train_on_split(dataset, model_cfg, &train_config, split.clone(), exec)?;
        runs.push(AblationRun { ablation, model_config: ablation.apply(model_cfg), train_config, outcome });
    }
    Ok(AblationReport { runs })
}
