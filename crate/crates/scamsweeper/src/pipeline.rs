//! The six commands behind the binary. Every `out` argument is a directory;
//! each command writes its artifacts plus `<command>.manifest.json` there.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use scamsweeper_core::graph::{GraphSummary, Label, TemporalMultigraph};
use scamsweeper_core::metrics::MetricsReport;
use scamsweeper_core::model::ModelConfig;
use scamsweeper_core::synth::{self, SynthError};
use scamsweeper_core::train::{self, Ablation, Dataset, Executor, TrainError};
use scamsweeper_core::walk::{self, SubgraphSequence, WalkError};
use serde::Serialize;

use crate::binfmt::{self, GraphFileError};
use crate::checkpoint::{self, CheckpointError};
use crate::config::{ConfigError, PipelineConfig};
use crate::hashing::{graph_hash, json_hash, sha256_hex};
use crate::io::{self, create, IoError, TxFormat};
use crate::manifest::RunManifest;
use crate::parallel::Pool;
use crate::report::{self, AblationJson, MetricsJson};
use crate::walkcache::{self, CacheError, CacheKey};

pub const TRANSACTIONS: &str = "transactions.csv";
pub const LABELS: &str = "labels.csv";
pub const MOTIFS: &str = "motifs.jsonl";
pub const GRAPH: &str = "graph.ssgr";
pub const WALKS: &str = "walks.jsonl";
pub const CHECKPOINT: &str = "model.ssck";
pub const METRICS: &str = "metrics.json";
pub const LOSS_CURVE: &str = "loss_curve.json";
pub const EVAL_METRICS: &str = "eval_metrics.json";
pub const ABLATION: &str = "ablation.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    GraphFile(#[from] GraphFileError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("walk cache was sampled from a different graph ({found}, expected {expected})")]
    GraphMismatch { expected: String, found: String },
    #[error("thread pool: {0}")]
    Threads(String),
}

impl PipelineError {
    /// 2 missing file, 3 invalid config, 4 invalid input data, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io(e) | Self::GraphFile(GraphFileError::Io(e)) | Self::Cache(CacheError::Io(e)) | Self::Checkpoint(CheckpointError::Io(e)) => io_code(e),
            Self::Config(_) | Self::Synth(_) | Self::Cache(CacheError::Stale { .. }) | Self::Checkpoint(CheckpointError::Mismatch(_)) => 3,
            Self::Train(TrainError::InvalidConfig(_)) | Self::Walk(WalkError::InvalidConfig(_)) => 3,
            Self::GraphFile(_) | Self::Cache(_) | Self::Checkpoint(_) | Self::Walk(_) | Self::Train(_) | Self::GraphMismatch { .. } => 4,
            Self::Threads(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "missing_file",
            3 => "invalid_config",
            4 => "invalid_input",
            _ => "failure",
        }
    }
}

fn io_code(e: &IoError) -> i32 {
    match e {
        IoError::NotFound(_) => 2,
        e if e.is_invalid_input() => 4,
        _ => 1,
    }
}

fn pool(cfg: &PipelineConfig) -> Result<Pool, PipelineError> {
    Pool::new(cfg.threads).map_err(|e| PipelineError::Threads(e.to_string()))
}

fn file_hash(path: &Path) -> Result<String, IoError> {
    std::fs::read(path).map(|b| sha256_hex(&b)).map_err(|e| IoError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializes");
    text.push('\n');
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    let mut f = create(path)?;
    std::io::Write::write_all(&mut f, text.as_bytes())
        .and_then(|_| std::io::Write::flush(&mut f))
        .map_err(|e| IoError::io(path, e))
}

/// Resolved config plus the file it came from, for manifests.
#[derive(Debug, Clone)]
pub struct Run {
    pub cfg: PipelineConfig,
    pub config_path: Option<PathBuf>,
}

impl Run {
    pub fn new(cfg: PipelineConfig, config_path: Option<PathBuf>) -> Self {
        Self { cfg, config_path }
    }

    fn manifest(&self, command: &str) -> RunManifest {
        RunManifest::start(command, self.config_path.as_deref(), self.cfg.hash(), self.cfg.seed)
    }

    /// Generates a labeled synthetic graph and exports it with its motif log.
    pub fn synth(&self, out: &Path) -> Result<GraphSummary, PipelineError> {
        let output = synth::generate(&self.cfg.synth)?;
        let mut m = self.manifest("synth");
        let paths = [out.join(TRANSACTIONS), out.join(LABELS), out.join(MOTIFS), out.join(GRAPH)];
        io::write_transactions(&output.graph, &paths[0], TxFormat::Csv)?;
        io::write_labels(&output.graph, &paths[1])?;
        io::write_motif_log(&output.graph, &output.motifs, &paths[2])?;
        binfmt::save(&output.graph, &paths[3])?;
        for p in &paths {
            m.output(p);
        }
        m.finish(&out.join("synth.manifest.json"))?;
        Ok(output.graph.summary())
    }

    /// Parses transaction and label files into the binary graph format.
    pub fn ingest(&self, transactions: &Path, labels: Option<&Path>, out: &Path) -> Result<GraphSummary, PipelineError> {
        let (g, summary) = io::ingest(transactions, labels)?;
        let mut m = self.manifest("ingest");
        m.input(transactions);
        if let Some(l) = labels {
            m.input(l);
        }
        let path = out.join(GRAPH);
        binfmt::save(&g, &path)?;
        m.output(&path);
        m.finish(&out.join("ingest.manifest.json"))?;
        Ok(summary)
    }

    pub fn cache_key(&self, g: &TemporalMultigraph) -> CacheKey {
        CacheKey {
            walk: self.cfg.walk_config(Some(g)),
            walks_per_node: self.cfg.walk.walks_per_node,
            normal_ratio: self.cfg.walk.normal_ratio,
            graph_hash: graph_hash(g),
        }
    }

    /// Samples walks from every malicious account and degree-matched normal
    /// accounts, then writes the walk cache.
    pub fn sample(&self, graph: &Path, out: &Path) -> Result<SampleSummary, PipelineError> {
        let g = binfmt::load(graph)?;
        let key = self.cache_key(&g);
        key.walk.validate()?;
        let starts = train::select_starts(&g, self.cfg.walk.normal_ratio, self.cfg.seed);
        if starts.is_empty() {
            return Err(WalkError::EmptyStarts.into());
        }
        let k = self.cfg.walk.walks_per_node;
        let wcfg = key.walk.clone();
        let walks: Vec<SubgraphSequence> = pool(&self.cfg)?.map(starts.len() * k, |i| walk::walk_for(&g, starts[i / k], i % k, &wcfg));
        let mut m = self.manifest("sample");
        m.input(graph);
        let path = out.join(WALKS);
        m.output(&path);
        walkcache::save(&path, &key, &walks, &m.manifest_hash)?;
        m.finish(&out.join("sample.manifest.json"))?;
        let mean_len = walks.iter().map(SubgraphSequence::len).sum::<usize>() as f64 / walks.len().max(1) as f64;
        Ok(SampleSummary { starts: starts.len(), walks: walks.len(), mean_subgraphs: mean_len, tau: wcfg.tau })
    }

    /// Graph, walk cache and dataset, checked against the current config.
    pub fn load_dataset(&self, graph: &Path, walks: &Path, model: &ModelConfig) -> Result<Loaded, PipelineError> {
        let g = binfmt::load(graph)?;
        let key = self.cache_key(&g);
        let (header, seqs) = match walkcache::load(walks, None)? {
            (h, _) if h.key.graph_hash != key.graph_hash => {
                return Err(PipelineError::GraphMismatch { expected: key.graph_hash, found: h.key.graph_hash })
            }
            (h, _) if h.config_hash != key.hash() => {
                return Err(CacheError::Stale { expected: key.hash(), found: h.config_hash }.into())
            }
            loaded => loaded,
        };
        let dataset = Dataset::from_walks(&g, &seqs, model)?;
        let dataset_hash = json_hash(&(header.config_hash, file_hash(walks)?));
        Ok(Loaded { dataset, dataset_hash })
    }

    /// Trains one model (the configured ablation variant), writes the f32
    /// checkpoint, metrics and loss curve. Metrics come from the stored
    /// (rounded) parameters so that `eval` reproduces them.
    pub fn train(&self, graph: &Path, walks: &Path, out: &Path) -> Result<TrainSummary, PipelineError> {
        let loaded = self.load_dataset(graph, walks, &self.cfg.model_config())?;
        let exec = pool(&self.cfg)?;
        let outcome = train::train(&loaded.dataset, &self.cfg.model, &self.cfg.train, &exec)?;
        let model = checkpoint::quantize(&outcome.model);
        let report = train::evaluate(&model, &loaded.dataset, &outcome.split.test, &exec)?;

        let mut m = self.manifest("train");
        m.input(graph).input(walks);
        let ck = out.join(CHECKPOINT);
        let metrics = out.join(METRICS);
        let curve = out.join(LOSS_CURVE);
        for p in [&ck, &metrics, &curve] {
            m.output(p);
        }
        let mut header = checkpoint::header_for(&model, &self.cfg.train, outcome.best_epoch, outcome.history.len(), self.cfg.hash(), loaded.dataset_hash.clone());
        header.manifest_hash = m.manifest_hash.clone();
        checkpoint::save(&ck, &header, &model)?;
        let json = MetricsJson::new(&report, self.cfg.hash(), loaded.dataset_hash.clone(), self.cfg.seed, m.manifest_hash.clone());
        write_text(&metrics, &json.to_json())?;
        let history: Vec<CurvePoint> = outcome
            .history
            .iter()
            .map(|r| CurvePoint { epoch: r.epoch, loss: r.loss, test_weighted_f1: r.test_weighted_f1 })
            .collect();
        write_json(&curve, &LossCurve { best_epoch: outcome.best_epoch, epochs: history, manifest_hash: m.manifest_hash.clone() })?;
        m.finish(&out.join("train.manifest.json"))?;
        Ok(TrainSummary { report, metrics: json, best_epoch: outcome.best_epoch, epochs_run: outcome.history.len(), class_counts: loaded.dataset.class_counts() })
    }

    /// Scores a checkpoint on one side of the deterministic account split.
    /// A checkpoint built for another model config is rejected before any
    /// output is written.
    pub fn eval(&self, checkpoint: &Path, graph: &Path, walks: &Path, side: SplitSide, out: &Path) -> Result<MetricsJson, PipelineError> {
        let ck = checkpoint::load(checkpoint)?;
        let expected = self.cfg.model_config();
        ck.check_model(&expected)?;
        let loaded = self.load_dataset(graph, walks, &expected)?;
        let exec = pool(&self.cfg)?;
        let split = train::stratified_split(&loaded.dataset, self.cfg.train.split.1, self.cfg.train.seed)?;
        let indices: Vec<usize> = match side {
            SplitSide::Test => split.test,
            SplitSide::Train => split.train,
            SplitSide::All => (0..loaded.dataset.samples.len()).collect(),
        };
        let report = train::evaluate(&ck.model, &loaded.dataset, &indices, &exec)?;
        let mut m = self.manifest("eval");
        m.input(checkpoint).input(graph).input(walks);
        let path = out.join(EVAL_METRICS);
        m.output(&path);
        let json = MetricsJson::new(&report, self.cfg.hash(), loaded.dataset_hash, self.cfg.seed, m.manifest_hash.clone());
        write_text(&path, &json.to_json())?;
        m.finish(&out.join("eval.manifest.json"))?;
        Ok(json)
    }

    /// Full model and both ablations on one shared split.
    pub fn ablate(&self, graph: &Path, walks: &Path, out: &Path) -> Result<AblationJson, PipelineError> {
        let loaded = self.load_dataset(graph, walks, &self.cfg.model)?;
        let exec = pool(&self.cfg)?;
        let base = train::TrainConfig { ablation: Ablation::None, ..self.cfg.train.clone() };
        let rep = train::run_ablation(&loaded.dataset, &self.cfg.model, &base, &exec)?;
        let variant_hash = |a: Ablation| {
            let mut c = self.cfg.clone();
            c.train.ablation = a;
            c.hash()
        };
        let mut m = self.manifest("ablate");
        m.input(graph).input(walks);
        let path = out.join(ABLATION);
        m.output(&path);
        let json = AblationJson {
            rows: report::ablation_rows(&rep, variant_hash),
            dataset_hash: loaded.dataset_hash,
            seed: self.cfg.seed,
            manifest_hash: m.manifest_hash.clone(),
        };
        write_json(&path, &json)?;
        m.finish(&out.join("ablate.manifest.json"))?;
        Ok(json)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitSide {
    Train,
    Test,
    All,
}

pub struct Loaded {
    pub dataset: Dataset,
    pub dataset_hash: String,
}

#[derive(Debug, Clone)]
pub struct SampleSummary {
    pub starts: usize,
    pub walks: usize,
    pub mean_subgraphs: f64,
    pub tau: f64,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub report: MetricsReport,
    pub metrics: MetricsJson,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub class_counts: Vec<usize>,
}

#[derive(Serialize)]
struct CurvePoint {
    epoch: usize,
    loss: f64,
    test_weighted_f1: f64,
}

#[derive(Serialize)]
struct LossCurve {
    best_epoch: usize,
    epochs: Vec<CurvePoint>,
    manifest_hash: String,
}

pub fn summary_table(s: &GraphSummary) -> String {
    let mut out = format!("accounts {}  transactions {}\n", s.nodes, s.edges);
    let labels: BTreeMap<&str, usize> = Label::ALL.iter().map(|l| (l.as_str(), s.labels.get(l).copied().unwrap_or(0))).collect();
    for (name, n) in labels {
        out.push_str(&format!("  {name:<9} {n}\n"));
    }
    out
}
