use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    /// Bare file name, so manifests do not depend on where a run lives.
    pub name: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> CliResult<Self> {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(FileDigest { name, sha256: file_sha256(path)? })
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub parameters: Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub details: Value,
}

impl Manifest {
    pub fn new(command: &'static str, cfg: &PipelineConfig, details: Value) -> Self {
        let parameters = cfg.parameters();
        let canonical = serde_json::to_string(&parameters).expect("parameters serialize");
        Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: sha256_hex(canonical.as_bytes()),
            parameters,
            inputs: Vec::new(),
            outputs: Vec::new(),
            details,
        }
    }

    pub fn inputs(mut self, paths: &[&Path]) -> CliResult<Self> {
        for p in paths {
            self.inputs.push(FileDigest::of(p)?);
        }
        Ok(self)
    }

    pub fn outputs(mut self, paths: &[&Path]) -> CliResult<Self> {
        for p in paths {
            self.outputs.push(FileDigest::of(p)?);
        }
        Ok(self)
    }

    /// Writes `<command>_manifest.json` into the output directory.
    pub fn write(&self, cfg: &PipelineConfig) -> CliResult<()> {
        write_json(&cfg.out(&format!("{}_manifest.json", self.command)), self)
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(CliError::io(path))
}

/// Wall-clock seconds per step, kept apart from the deterministic outputs.
pub fn write_timing(cfg: &PipelineConfig, command: &str, steps: &[(&str, f64)]) -> CliResult<()> {
    let map: serde_json::Map<String, Value> = steps.iter().map(|(k, v)| (k.to_string(), Value::from(*v))).collect();
    write_json(&cfg.out(&format!("{command}_timing.json")), &map)
}
