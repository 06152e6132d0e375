//! Model checkpoints: `"SSCK"`, header length (u32 LE), JSON header, then
//! every parameter tensor as little-endian f32 in header order.

use std::io::{Read, Write};
use std::path::Path;

use scamsweeper_core::model::{Model, ModelConfig, ModelError};
use scamsweeper_core::nn::Tensor;
use scamsweeper_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::io::{create, open, IoError};

pub const MAGIC: &[u8; 4] = b"SSCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Where training randomness came from; enough to replay the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub algorithm: String,
    pub seed: u64,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub version: u32,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub tensors: Vec<TensorEntry>,
    pub best_epoch: usize,
    pub rng: RngState,
    pub config_hash: String,
    pub dataset_hash: String,
    /// Hash of the run manifest that produced the checkpoint; empty if none.
    pub manifest_hash: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("checkpoint does not match the model: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: Header,
    pub model: Model,
}

/// Rounds every parameter to f32, the precision checkpoints store.
pub fn quantize(model: &Model) -> Model {
    let mut m = model.clone();
    for t in m.params_mut().tensors_mut() {
        for v in t.data_mut() {
            *v = *v as f32 as f64;
        }
    }
    m
}

pub fn encode(header: &Header, model: &Model) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + json.len() + model.params().numel() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in model.params().tensors() {
        for v in t.data() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn header_for(model: &Model, train: &TrainConfig, best_epoch: usize, epochs_run: usize, config_hash: String, dataset_hash: String) -> Header {
    Header {
        version: VERSION,
        model: model.config().clone(),
        train: train.clone(),
        tensors: model
            .params()
            .names()
            .iter()
            .zip(model.params().tensors())
            .map(|(n, t)| TensorEntry { name: n.clone(), shape: t.shape().to_vec() })
            .collect(),
        best_epoch,
        rng: RngState { algorithm: "chacha8".into(), seed: train.seed, epochs_run },
        config_hash,
        dataset_hash,
        manifest_hash: String::new(),
    }
}

pub fn decode(bytes: &[u8], path: &str) -> Result<Checkpoint, CheckpointError> {
    let corrupt = |reason: &str| CheckpointError::Corrupt { path: path.into(), reason: reason.into() };
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(corrupt("not a checkpoint (bad magic)"));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let json = bytes.get(8..8 + len).ok_or_else(|| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| corrupt(&e.to_string()))?;
    if header.version != VERSION {
        return Err(corrupt(&format!("unsupported version {}", header.version)));
    }
    let mut blob = &bytes[8 + len..];
    let mut names = Vec::with_capacity(header.tensors.len());
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        if blob.len() < n * 4 {
            return Err(corrupt(&format!("truncated tensor {}", entry.name)));
        }
        let data = blob[..n * 4].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect();
        blob = &blob[n * 4..];
        tensors.push(Tensor::new(&entry.shape, data).map_err(|e| corrupt(&e.to_string()))?);
        names.push(entry.name.clone());
    }
    if !blob.is_empty() {
        return Err(corrupt("trailing bytes after tensors"));
    }
    let model = Model::from_parts(header.model.clone(), names, tensors)?;
    Ok(Checkpoint { header, model })
}

pub fn save(path: &Path, header: &Header, model: &Model) -> Result<(), IoError> {
    let mut f = create(path)?;
    f.write_all(&encode(header, model)).and_then(|_| f.flush()).map_err(|e| IoError::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| IoError::io(path, e))?;
    decode(&bytes, &path.display().to_string())
}

impl Checkpoint {
    /// Rejects a checkpoint trained for a different model config.
    pub fn check_model(&self, expected: &ModelConfig) -> Result<(), CheckpointError> {
        if &self.header.model != expected {
            return Err(CheckpointError::Mismatch(format!(
                "checkpoint model {} vs configured {}",
                serde_json::to_string(&self.header.model).unwrap_or_default(),
                serde_json::to_string(expected).unwrap_or_default()
            )));
        }
        Ok(())
    }
}
