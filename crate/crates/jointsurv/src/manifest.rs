//! Run manifests. The hash covers everything that determines a command's
//! outputs (tool version, command, configuration, input file contents) and
//! nothing that does not (paths, output directory, wall-clock time), so a
//! rerun anywhere reproduces the same hash and the same artifacts.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::report::SCHEMA_VERSION;

pub const TOOL: &str = "jointsurv";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

impl InputFile {
    pub fn read(role: &str, path: &Path) -> Result<Self> {
        Ok(Self { role: role.into(), path: path.to_path_buf(), sha256: file_digest(path)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub base: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chains: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub manifest_hash: String,
    pub config: serde_json::Value,
    pub seeds: Seeds,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<String>,
    /// Seconds since the Unix epoch; excluded from the hash.
    pub created_unix: u64,
}

/// What the hash is computed over.
#[derive(Serialize)]
struct Hashed<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    config: &'a serde_json::Value,
    seeds: &'a Seeds,
    inputs: Vec<(&'a str, &'a str)>,
}

impl Manifest {
    /// `config` may be any serialisable snapshot; data paths inside a
    /// [`RunConfig`] are dropped before hashing.
    pub fn new(command: &str, config: &RunConfig, seeds: Seeds, inputs: Vec<InputFile>) -> Self {
        let snapshot = serde_json::to_value(config).expect("configuration serialises");
        let mut hashed_cfg = config.clone();
        hashed_cfg.data.longitudinal = None;
        hashed_cfg.data.survival = None;
        Self::with_snapshot(command, snapshot, &serde_json::to_value(hashed_cfg).expect("serialises"), seeds, inputs)
    }

    pub fn with_snapshot(
        command: &str,
        snapshot: serde_json::Value,
        hashed_config: &serde_json::Value,
        seeds: Seeds,
        inputs: Vec<InputFile>,
    ) -> Self {
        let hashed = Hashed {
            tool: TOOL,
            version: VERSION,
            command,
            config: hashed_config,
            seeds: &seeds,
            inputs: inputs.iter().map(|i| (i.role.as_str(), i.sha256.as_str())).collect(),
        };
        let manifest_hash = sha256_hex(&serde_json::to_vec(&hashed).expect("manifest serialises"));
        Self {
            schema_version: SCHEMA_VERSION,
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            manifest_hash,
            config: snapshot,
            seeds,
            inputs,
            outputs: Vec::new(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        crate::report::write_json(&path, self)?;
        Ok(path)
    }
}
