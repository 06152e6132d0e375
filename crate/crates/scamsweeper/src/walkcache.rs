//! Walk cache: JSONL with a header line keyed by the sampling config hash.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use scamsweeper_core::walk::{SubgraphSequence, WalkConfig};
use serde::{Deserialize, Serialize};

use crate::hashing::json_hash;
use crate::io::{create, open, IoError};

pub const FORMAT: &str = "scamsweeper-walks";
pub const VERSION: u32 = 1;

/// Everything that determines the cached walks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheKey {
    pub walk: WalkConfig,
    pub walks_per_node: usize,
    pub normal_ratio: f64,
    pub graph_hash: String,
}

impl CacheKey {
    pub fn hash(&self) -> String {
        json_hash(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub key: CacheKey,
    pub sequences: usize,
    pub manifest_hash: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: line {line}: {reason}")]
    Malformed { path: String, line: usize, reason: String },
    #[error("stale walk cache: built for config {found}, expected {expected}")]
    Stale { expected: String, found: String },
}

pub fn save(path: &Path, key: &CacheKey, walks: &[SubgraphSequence], manifest_hash: &str) -> Result<(), IoError> {
    let mut out = create(path)?;
    let io = |e: std::io::Error| IoError::io(path, e);
    let header = Header { format: FORMAT.into(), version: VERSION, config_hash: key.hash(), key: key.clone(), sequences: walks.len(), manifest_hash: manifest_hash.into() };
    serde_json::to_writer(&mut out, &header).map_err(|e| io(e.into()))?;
    out.write_all(b"\n").map_err(io)?;
    for w in walks {
        serde_json::to_writer(&mut out, w).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads a cache. With `expected` set, a cache built for a different config
/// hash is rejected as stale.
pub fn load(path: &Path, expected: Option<&str>) -> Result<(Header, Vec<SubgraphSequence>), CacheError> {
    let malformed = |line: usize, reason: String| CacheError::Malformed { path: path.display().to_string(), line, reason };
    let mut lines = BufReader::new(open(path)?).lines();
    let first = lines
        .next()
        .ok_or_else(|| malformed(1, "missing header".into()))?
        .map_err(|e| IoError::io(path, e))?;
    let header: Header = serde_json::from_str(&first).map_err(|e| malformed(1, e.to_string()))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(malformed(1, format!("unsupported cache {} v{}", header.format, header.version)));
    }
    if header.config_hash != header.key.hash() {
        return Err(malformed(1, "header hash does not match its config".into()));
    }
    if let Some(want) = expected {
        if want != header.config_hash {
            return Err(CacheError::Stale { expected: want.into(), found: header.config_hash });
        }
    }
    let mut walks = Vec::with_capacity(header.sequences);
    for (i, line) in lines.enumerate() {
        let text = line.map_err(|e| IoError::io(path, e))?;
        if text.trim().is_empty() {
            continue;
        }
        walks.push(serde_json::from_str(&text).map_err(|e| malformed(i + 2, e.to_string()))?);
    }
    if walks.len() != header.sequences {
        return Err(malformed(walks.len() + 1, format!("expected {} sequences, found {}", header.sequences, walks.len())));
    }
    Ok((header, walks))
}
