//! Run manifests: what a command read, wrote and was configured with.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::hashing::json_hash;
use crate::io::{create, IoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_path: Option<PathBuf>,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Hash over every field except the timestamps and this one.
    pub manifest_hash: String,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Serialize)]
struct Hashed<'a> {
    command: &'a str,
    tool_version: &'a str,
    config_path: &'a Option<PathBuf>,
    config_hash: &'a str,
    seed: u64,
    inputs: &'a [PathBuf],
    outputs: &'a [PathBuf],
}

impl RunManifest {
    pub fn start(command: &str, config_path: Option<&Path>, config_hash: String, seed: u64) -> Self {
        let mut m = Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_path: config_path.map(Path::to_path_buf),
            config_hash,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix: now(),
            finished_unix: 0,
            manifest_hash: String::new(),
        };
        m.rehash();
        m
    }

    pub fn input(&mut self, p: &Path) -> &mut Self {
        self.inputs.push(p.to_path_buf());
        self.rehash();
        self
    }

    pub fn output(&mut self, p: &Path) -> &mut Self {
        self.outputs.push(p.to_path_buf());
        self.rehash();
        self
    }

    fn rehash(&mut self) {
        self.manifest_hash = json_hash(&Hashed {
            command: &self.command,
            tool_version: &self.tool_version,
            config_path: &self.config_path,
            config_hash: &self.config_hash,
            seed: self.seed,
            inputs: &self.inputs,
            outputs: &self.outputs,
        });
    }

    pub fn finish(&mut self, path: &Path) -> Result<(), IoError> {
        self.finished_unix = now();
        let mut f = create(path)?;
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::io::Write::write_all(&mut f, text.as_bytes())
            .and_then(|_| std::io::Write::flush(&mut f))
            .map_err(|e| IoError::io(path, e))
    }
}
