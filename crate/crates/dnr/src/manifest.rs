//! Run manifests written next to every output artifact.
//!
//! A manifest records the fully resolved command, digests of its inputs and
//! when each stage ran. Replaying the recorded command against the same
//! inputs reproduces every numeric output bit for bit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cli::Command;
use crate::error::{DnrError, Result};
use crate::io::{read_json, write_json};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| DnrError::io(path, e))?;
        Ok(InputDigest {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: Command,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: f64,
    pub stage_seconds: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: RunManifest = read_json(path)?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(DnrError::Replay(format!(
                "unsupported manifest schema {}",
                m.schema_version
            )));
        }
        Ok(m)
    }

    /// Fails if any recorded input changed since the run.
    pub fn verify_inputs(&self) -> Result<()> {
        for input in &self.inputs {
            let now = InputDigest::of(&input.path)?;
            if now.sha256 != input.sha256 {
                return Err(DnrError::Replay(format!(
                    "{} changed since the recorded run",
                    input.path.display()
                )));
            }
        }
        Ok(())
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Collects stage timings while a command runs.
#[derive(Debug)]
pub struct StageClock {
    started_at: f64,
    stages: BTreeMap<String, f64>,
}

impl Default for StageClock {
    fn default() -> Self {
        StageClock {
            started_at: unix_now(),
            stages: BTreeMap::new(),
        }
    }
}

impl StageClock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs `f`, adding its wall time to `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.stages.entry(stage.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64();
        out
    }

    pub fn finish(
        self,
        command: Command,
        seed: Option<u64>,
        inputs: Vec<InputDigest>,
        outputs: Vec<PathBuf>,
    ) -> RunManifest {
        RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            seed,
            inputs,
            outputs,
            started_at: self.started_at,
            finished_at: unix_now(),
            stage_seconds: self.stages,
        }
    }
}
